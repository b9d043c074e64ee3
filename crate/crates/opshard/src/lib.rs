//! opshard: operation-level scheduling for MapReduce-style Reduce phases.
//!
//! Map output keys are grouped into fine-grained operation clusters; the
//! master collects per-cluster pair counts from every Map task, solves a
//! balanced assignment of clusters to Reduce slots, and each slot executes
//! its clusters through a copy -> sort -> run pipeline. The crate bundles
//! the wire protocol, three schedulers (hash, LPT, a subset-sum
//! decomposition solver), the slot pipeline, a single-process job engine,
//! and a discrete-event network simulator for contention studies.
//!
//! See the `examples/` directory for runnable entry points covering each
//! capability, or the `opshard` binary for the CLI.

pub mod cli;
pub mod cluster;
pub mod comm;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod sched;

pub use error::{Error, Result};
pub use model::{ClusterId, JobConfig, KeyDist, Schedule, SchedulerKind, SlotId};
