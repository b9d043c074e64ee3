use std::path::PathBuf;

use crate::model::ClusterId;

/// Errors produced by the engine, the protocol layer and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("count overflow while aggregating pair counts")]
    CountOverflow,

    #[error("statistics registry incomplete: have {have} of {expected} map tasks")]
    NotReady { have: usize, expected: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("tracker {0} unreachable, aborting job")]
    Undeliverable(usize),

    #[error("instance too large for the exact oracle: n={n}, m={m} (limits n<=20, m<=5)")]
    OracleTooLarge { n: usize, m: usize },

    #[error("trace is missing anchor event: {0}")]
    IncompleteTrace(String),

    #[error("reduce slot {slot} failed on cluster {cluster:?}: {message}")]
    SlotFailure {
        slot: usize,
        cluster: Option<ClusterId>,
        message: String,
    },

    #[error("map task {task} failed twice: {message}")]
    MapTaskFailed { task: usize, message: String },

    #[error("malformed file {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
