//! Experiment harness around `srpo-core`: configuration, training runs,
//! comparisons, sweeps, ablations, reward benchmarks and report plots.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;

pub use config::{Algorithm, RunConfig};

/// Failure classes, mapped to process exit codes by the binary.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] srpo_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Core errors raised while interpreting configuration count as
    /// configuration errors.
    pub fn from_core_config(e: srpo_core::Error) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(srpo_core::Error::Config(_)) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
