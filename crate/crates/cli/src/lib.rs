//! Experiment runner for orbital MCMC: configuration, seeded multi-chain
//! runs with budget accounting, verification suites and the SNIS study.

pub mod config;
pub mod runner;
pub mod snis;
pub mod verify;

pub use config::{ExperimentConfig, TargetName};
pub use runner::{run_experiment, run_with_workers, write_outputs, RunOutcome, WORKERS_ENV};
pub use verify::{run_suite, Suite, SuiteReport};
