//! Experiment driver: TOML configs, seeded runs, sweeps, comparisons and
//! CSV output.

pub mod compare;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, ModelKind, Task};
pub use error::{HarnessError, Result};
pub use run::{execute, run, RunOutcome, SeedResult, Summary};
