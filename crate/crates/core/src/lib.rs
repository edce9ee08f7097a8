//! Burstiness analysis for packet traces: min-plus envelopes, peak-to-mean and
//! worst-case backlog curves, synthetic distributed-training workloads and a
//! fan-in switch simulator with PFC and DCQCN.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod netcalc;
pub mod simswitch;
mod table;
pub mod trace;
pub mod units;
pub mod workload;

pub use error::{Error, Result};
