//! Error type and the exit-code table.

use std::path::Path;

use thiserror::Error;

use bpinn::data::DataError;
use bpinn::metrics::MetricsError;
use bpinn::model::ModelError;
use bpinn::net::CheckpointError;
use bpinn::physics::PhysicsError;
use bpinn::refsolver::RefSolverError;
use bpinn::thermal::ThermalError;
use bpinn::train::TrainError;
use bpinn::uq::UqError;

/// Exit codes: 0 ok, 1 usage, 2 I/O, 3 divergence, 4 validation.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const IO: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
    pub const VALIDATION: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("training diverged; best checkpoint written to {0}")]
    Divergence(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::Divergence(_) => exit::DIVERGENCE,
            CliError::Validation(_) => exit::VALIDATION,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { path, source } => CliError::Io { path, source },
            other => CliError::invalid(other),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { path, source } => CliError::Io { path, source },
            other => CliError::invalid(other),
        }
    }
}

impl From<RefSolverError> for CliError {
    fn from(e: RefSolverError) -> Self {
        match e {
            RefSolverError::Io { path, source } => CliError::Io { path, source },
            other => CliError::invalid(other),
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::invalid(e)
            }
        }
    )*};
}

validation_from!(MetricsError, ModelError, PhysicsError, ThermalError, TrainError, UqError);
