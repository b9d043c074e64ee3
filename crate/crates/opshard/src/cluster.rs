//! Key-to-operation-cluster mapping.
//!
//! The default clusterer groups keys by hash congruence: keys `a` and `b`
//! share a cluster iff `|hash(a)| == |hash(b)| (mod n_target)`. The default
//! hash is FNV-1a (64-bit), a fixed published non-cryptographic hash, so the
//! mapping is stable across runs and platforms.

use std::collections::HashSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::ClusterId;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the key bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// `|h|` with the hash reinterpreted as a signed 64-bit value. The magnitude
/// of `i64::MIN` is taken via unsigned reinterpretation, so no overflow.
pub fn hash_magnitude(h: u64) -> u64 {
    (h as i64).unsigned_abs()
}

type HashFn = dyn Fn(&[u8]) -> u64 + Send + Sync;

/// Deterministic key -> cluster mapping, fixed for the lifetime of a job.
#[derive(Clone)]
pub struct Clusterer {
    n_target: usize,
    hash: Arc<HashFn>,
    custom: bool,
}

impl std::fmt::Debug for Clusterer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Clusterer")
            .field("n_target", &self.n_target)
            .field("kind", if self.custom { &"custom" } else { &"default-hash" })
            .finish()
    }
}

impl Clusterer {
    /// Default hash-modulo clusterer with the given targeted cluster count.
    pub fn default_hash(n_target: usize) -> Result<Clusterer> {
        if n_target == 0 {
            return Err(Error::InvalidInput("n_target must be at least 1".into()));
        }
        Ok(Clusterer {
            n_target,
            hash: Arc::new(fnv1a),
            custom: false,
        })
    }

    /// Clusterer with a user-supplied hash. Emitted ids are still validated
    /// against `n_target` by construction of `cluster_of`.
    pub fn with_hash<F>(n_target: usize, hash: F) -> Result<Clusterer>
    where
        F: Fn(&[u8]) -> u64 + Send + Sync + 'static,
    {
        if n_target == 0 {
            return Err(Error::InvalidInput("n_target must be at least 1".into()));
        }
        Ok(Clusterer {
            n_target,
            hash: Arc::new(hash),
            custom: true,
        })
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    /// `(|hash(key)| mod n_target) + 1`.
    pub fn cluster_of(&self, key: &[u8]) -> ClusterId {
        let mag = hash_magnitude((self.hash)(key));
        ClusterId((mag % self.n_target as u64) as u32 + 1)
    }
}

/// Count of distinct clusters actually observed; at most `n_target`.
pub fn effective_n(observed: &HashSet<ClusterId>, c: &Clusterer) -> usize {
    debug_assert!(observed.iter().all(|id| (id.index()) < c.n_target()));
    observed.len()
}

/// Documented default for the targeted cluster count: eight clusters per
/// Reduce slot, inside the empirically good 6-16x band.
pub fn default_n_target(m: usize) -> usize {
    8 * m.max(1)
}
