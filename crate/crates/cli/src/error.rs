use std::process::ExitCode;

use swarm_herding::Error;
use thiserror::Error;

/// Failure classes with stable process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("incompatible or malformed q-table: {0}")]
    Compatibility(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Compatibility(_) => 4,
        })
    }

    pub fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let msg = err.to_string();
        match err {
            Error::Io(_) => CliError::Io(msg),
            Error::Compatibility(_) | Error::Format(_) | Error::Truncated { .. } => {
                CliError::Compatibility(msg)
            }
            Error::Config(_)
            | Error::InvalidDimension { .. }
            | Error::InvalidGraph(_)
            | Error::InvalidRates(_)
            | Error::InvalidState(_)
            | Error::EmptySwarm
            | Error::Encoding(_) => CliError::Config(msg),
            _ => CliError::Runtime(msg),
        }
    }
}
