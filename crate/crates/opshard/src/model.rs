//! Domain types shared by every module, plus the slot-load metrics.
//!
//! Loads count key-value pairs. Counts are `u64` and overflow on
//! aggregation is a hard error rather than wraparound.

use crate::error::{Error, Result};

/// Identifier of an operation cluster. Ids within one job form the
/// contiguous set `1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub u32);

impl ClusterId {
    /// Zero-based index into a dense per-cluster vector.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index(idx: usize) -> ClusterId {
        ClusterId(idx as u32 + 1)
    }
}

impl std::fmt::Display for ClusterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of a Reduce task slot, in `1..=m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotId(pub u32);

impl SlotId {
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index(idx: usize) -> SlotId {
        SlotId(idx as u32 + 1)
    }
}

impl std::fmt::Display for SlotId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The aggregated key distribution: one pair count per operation cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyDist {
    loads: Vec<u64>,
}

impl KeyDist {
    pub fn new(loads: Vec<u64>) -> KeyDist {
        KeyDist { loads }
    }

    pub fn n(&self) -> usize {
        self.loads.len()
    }

    pub fn loads(&self) -> &[u64] {
        &self.loads
    }

    pub fn load(&self, cluster: ClusterId) -> u64 {
        self.loads[cluster.index()]
    }

    /// Total number of intermediate pairs. Errors on `u64` overflow.
    pub fn total(&self) -> Result<u64> {
        self.loads
            .iter()
            .try_fold(0u64, |acc, &k| acc.checked_add(k))
            .ok_or(Error::CountOverflow)
    }

    pub fn max(&self) -> u64 {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    pub fn clusters(&self) -> impl Iterator<Item = ClusterId> + '_ {
        (0..self.loads.len()).map(ClusterId::from_index)
    }
}

/// The assignment vector `s_1..s_n`: one slot id per operation cluster.
///
/// This is the canonical encoding of the binary assignment matrix: the
/// entry for cluster `j` names the single slot `i` with `x_ij = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    assignment: Vec<SlotId>,
    m: usize,
}

impl Schedule {
    pub fn new(assignment: Vec<SlotId>, m: usize) -> Result<Schedule> {
        if m == 0 {
            return Err(Error::InvalidInput("m must be at least 1".into()));
        }
        for (j, s) in assignment.iter().enumerate() {
            if s.0 == 0 || s.index() >= m {
                return Err(Error::InvalidInput(format!(
                    "cluster {} assigned to slot {} outside 1..={}",
                    j + 1,
                    s,
                    m
                )));
            }
        }
        Ok(Schedule { assignment, m })
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn slot_of(&self, cluster: ClusterId) -> SlotId {
        self.assignment[cluster.index()]
    }

    pub fn assignment(&self) -> &[SlotId] {
        &self.assignment
    }

    /// The clusters owned by one Reduce slot, in increasing id order.
    pub fn owned_clusters(&self, slot: SlotId) -> Vec<ClusterId> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == slot)
            .map(|(j, _)| ClusterId::from_index(j))
            .collect()
    }

    pub fn slots(&self) -> impl Iterator<Item = SlotId> {
        (0..self.m).map(SlotId::from_index)
    }
}

/// Per-slot pair counts `p_1..p_m` induced by a schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotLoads {
    loads: Vec<u64>,
}

impl SlotLoads {
    pub fn new(loads: Vec<u64>) -> SlotLoads {
        SlotLoads { loads }
    }

    pub fn m(&self) -> usize {
        self.loads.len()
    }

    pub fn loads(&self) -> &[u64] {
        &self.loads
    }

    pub fn total(&self) -> Result<u64> {
        self.loads
            .iter()
            .try_fold(0u64, |acc, &p| acc.checked_add(p))
            .ok_or(Error::CountOverflow)
    }
}

/// Which P||C_max solver assigns clusters to Reduce slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerKind {
    Hash,
    Lpt,
    Os4m,
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchedulerKind::Hash => write!(f, "hash"),
            SchedulerKind::Lpt => write!(f, "lpt"),
            SchedulerKind::Os4m => write!(f, "os4m"),
        }
    }
}

/// Per-job configuration knobs.
#[derive(Debug, Clone)]
pub struct JobConfig {
    /// Reduce slot count.
    pub m: usize,
    /// Map slot count.
    pub map_slots: usize,
    /// Map wave count: the job runs `w * map_slots` Map tasks.
    pub w: usize,
    /// Targeted operation-cluster count for the default clusterer.
    pub n_target: usize,
    /// Scheduler precision parameter, in (0, 1).
    pub eta: f64,
    pub scheduler: SchedulerKind,
}

impl JobConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.map_slots == 0 || self.w == 0 || self.n_target == 0 {
            return Err(Error::InvalidInput(
                "m, map_slots, w and n_target must all be at least 1".into(),
            ));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "eta must lie in (0, 1), got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

impl Default for JobConfig {
    fn default() -> JobConfig {
        JobConfig {
            m: default_reduce_slots(),
            map_slots: 4,
            w: 1,
            n_target: 8 * default_reduce_slots(),
            eta: 0.002,
            scheduler: SchedulerKind::Os4m,
        }
    }
}

/// Default Reduce slot count for the local machine: `max(2, floor(0.95 * cores))`.
pub fn default_reduce_slots() -> usize {
    let cores = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(2);
    ((cores as f64 * 0.95) as usize).max(2)
}

/// The load of every Reduce slot under `sched`: `p_i = sum of k_j over j with s_j = i`.
pub fn slot_loads(dist: &KeyDist, sched: &Schedule) -> Result<SlotLoads> {
    if dist.n() != sched.n() {
        return Err(Error::DimensionMismatch(format!(
            "distribution has {} clusters but schedule has {}",
            dist.n(),
            sched.n()
        )));
    }
    let mut loads = vec![0u64; sched.m()];
    for (j, slot) in sched.assignment().iter().enumerate() {
        let p = &mut loads[slot.index()];
        *p = p
            .checked_add(dist.loads()[j])
            .ok_or(Error::CountOverflow)?;
    }
    Ok(SlotLoads::new(loads))
}

/// The max-load criterion: the largest slot load.
pub fn max_load(loads: &SlotLoads) -> Result<u64> {
    loads
        .loads()
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::InvalidInput("max_load over zero slots".into()))
}

/// The ideal load `sum(k_j) / r`, a lower bound on the optimal max-load.
pub fn ideal_load(dist: &KeyDist, r: usize) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidInput("ideal_load with r = 0".into()));
    }
    Ok(dist.total()? as f64 / r as f64)
}

/// Exact comparison `max_load >= total / r`, i.e. `max_load * r >= total`,
/// avoiding float rounding.
pub fn at_least_ideal(max_load: u64, total: u64, r: usize) -> bool {
    (max_load as u128) * (r as u128) >= total as u128
}
