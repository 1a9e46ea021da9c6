//! Experiment drivers behind the `cnpdg` command.

pub mod config;
pub mod mms;
pub mod output;
pub mod reactor;
pub mod solvecheck;

use thiserror::Error;

pub use config::{ExperimentKind, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 2 configuration, 3 solver failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<cnpdg::vtk::VtkError> for CliError {
    fn from(e: cnpdg::vtk::VtkError) -> Self {
        match e {
            cnpdg::vtk::VtkError::Io(e) => CliError::Io(e),
            other => CliError::Io(std::io::Error::other(other.to_string())),
        }
    }
}

pub(crate) fn solver_err(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}
