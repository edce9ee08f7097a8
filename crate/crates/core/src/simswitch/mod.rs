//! Discrete-event model of many workers bursting through one switch egress
//! port under PFC and DCQCN.

mod config;
mod dcqcn;
mod engine;
mod result;

pub use config::{pfc_thresholds, BurstSchedule, DcqcnParams, FastReaction, PfcParams, SimConfig, SimWorkload};
pub use dcqcn::{red_mark_probability, IncreaseSource, RateState};
pub use engine::{run_counterfactual_fast_reaction, run_fanin};
pub use result::{
    read_series_csv, read_worker_csv, EventCounts, Reduction, Sample, SimResult, Summary, WorkerSample, PLATEAU_END_PS, PLATEAU_START_PS,
    REDUCTION_FRACTION,
};
