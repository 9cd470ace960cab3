use std::path::PathBuf;

use thiserror::Error;

/// Failures of a command, each mapped to a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("subcritical energy requested: kappa = {kappa} does not exceed c = {critical}")]
    Subcritical { kappa: f64, critical: f64 },
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) | CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Subcritical { .. } => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }
}

impl From<magflow::Error> for CliError {
    fn from(e: magflow::Error) -> Self {
        use magflow::Error as E;
        match e {
            E::Subcritical { kappa, critical } => CliError::Subcritical { kappa, critical },
            E::NonConvergence(msg) => CliError::NonConvergence(msg),
            E::NonFinite { .. } | E::Cfl { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
