//! Experiment runner: JSON configuration, the `design`, `simulate`,
//! `benchmark` and `flops` commands, and CSV/JSON emission.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_benchmark, cmd_design, cmd_flops, cmd_simulate};
pub use config::{ExperimentConfig, Overrides};
pub use error::CliError;
