//! Experiment configuration, the continuity suite and the run driver behind
//! the `expfun-lab` binary.

pub mod config;
pub mod continuity;
pub mod run;

pub use config::{Command, ExperimentConfig, GridSpec, SpecField};
pub use continuity::{continuity_suite, ContinuityFamily, ContinuityRow, ContinuitySuiteReport};
pub use run::{run_config, run_experiment, RunOptions, RunSummary};
