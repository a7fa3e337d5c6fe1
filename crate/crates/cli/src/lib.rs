//! Configuration, orchestration and output layout for chernflow runs.

pub mod config;
pub mod run;

use chernflow_core::Error;

pub use config::{parse_config_file, parse_config_str, Overrides, RunConfig};
pub use run::{run_scenario, OutputLayout, RunOptions, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_CHECKS_FAILED: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical abort: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::InvalidScenario(_)
            | Error::BoundaryData(_)
            | Error::Checkpoint(_)
            | Error::InsufficientData(_) => CliError::Config(e.to_string()),
            Error::SingularMetric { .. }
            | Error::OutOfRegime(_)
            | Error::ReductionFailure(_)
            | Error::AdmissibilityLost { .. }
            | Error::StepFailure(_) => CliError::Numerical(e.to_string()),
        }
    }
}
