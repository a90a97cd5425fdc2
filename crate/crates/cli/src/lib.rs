//! Experiment runner for `meshpon-core`: reads a JSON config, runs one of
//! the `budget`, `simulate`, `region` or `optimize` experiments and writes
//! CSV/JSON artifacts for plotting.

pub mod artifact;
pub mod config;
pub mod run;

use thiserror::Error;

pub use artifact::Artifact;
pub use config::{ExperimentConfig, Overrides};
pub use run::{execute, run_budget, run_optimize, run_region, run_simulate, Command, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}
