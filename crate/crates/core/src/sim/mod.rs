//! Closed-loop simulation of the controllers against the continuous plant,
//! with energy accounting, FLOP bookkeeping and run comparison.

mod compare;
mod config;
mod flops;
mod runner;

pub use compare::{
    compare_runs, relative_improvement, summarize, ComparisonReport, Improvement, RunSummary,
};
pub use config::{ControllerConfig, ControllerMode, WarmStart};
pub use flops::{count_step_flops, rt_min_period, FlopEntry, FlopLedger};
pub use runner::{
    run_baseline_mpc, run_closed_loop, run_single_iteration_mpc, wave_fingerprint, DesignSummary,
    SimResult, SimulationFailure, SimulationRecord, ViolationCounts,
};
