//! Experiment runner for fs-CLF based MPC: scenario configs, the `run`,
//! `compare`, `verify` and `bound` commands, and their CSV/JSON outputs.

pub mod commands;
pub mod config;
pub mod output;

use fsmpc_core::analysis::AnalysisError;
use fsmpc_core::mpc::MpcError;
use fsmpc_core::ocp::OcpError;
use thiserror::Error;

pub use config::ScenarioConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not certified: {failing} of {samples} samples fail")]
    NotCertified { failing: usize, samples: usize },
}

impl CliError {
    /// 0 success, 1 check failed (`verify`), 2 validation, 3 infeasible,
    /// 4 solver failure, 5 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NotCertified { .. } => 1,
            CliError::Validation { .. } | CliError::Parse { .. } | CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<MpcError> for CliError {
    fn from(e: MpcError) -> Self {
        match e {
            MpcError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            MpcError::Ocp { source: OcpError::Infeasible { .. }, .. } => CliError::Infeasible(e.to_string()),
            MpcError::Ocp {
                source: OcpError::InitialStateInfeasible,
                ..
            } => CliError::Infeasible(e.to_string()),
            MpcError::InvalidConfig(_) | MpcError::UnknownScheme(_) => CliError::Usage(e.to_string()),
            MpcError::Model(_) | MpcError::Ocp { .. } => CliError::Solver(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::SampleInfeasible { .. } => CliError::Infeasible(e.to_string()),
            AnalysisError::InvalidInput(_) | AnalysisError::EmptySamples | AnalysisError::IndexOutOfRange { .. } => {
                CliError::Usage(e.to_string())
            }
            AnalysisError::TrajectoryTooShort { .. } => CliError::Usage(e.to_string()),
            AnalysisError::Model(_) | AnalysisError::Ocp(_) => CliError::Solver(e.to_string()),
        }
    }
}
