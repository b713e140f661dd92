//! Command implementations behind the `sharedrive` binary, plus the
//! websocket gateway for live teleoperation.

pub mod commands;
pub mod gateway;
pub mod protocol;

use thiserror::Error;

/// Failures of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments.
    #[error("{0}")]
    Usage(String),
    /// A scenario, corpus, log or config could not be loaded.
    #[error("{0}")]
    Load(String),
    #[error("{0}")]
    Config(String),
    /// An acceptance check or replay comparison failed.
    #[error("{0}")]
    Check(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Load(_) | CliError::Config(_) => 2,
            CliError::Check(_) | CliError::Runtime(_) => 1,
        }
    }
}
