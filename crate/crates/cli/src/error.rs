use std::path::PathBuf;

use textsep::Error;
use thiserror::Error as ThisError;

/// CLI failure; each variant maps to a process exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Backend(String),
    #[error("{message}")]
    Diverged { message: String, checkpoint: Option<PathBuf> },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Diverged { .. } => 4,
            CliError::Config(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Wav { .. } => CliError::Io(msg),
            Error::Backend { .. } | Error::Parse { .. } | Error::UnknownClip(_) => CliError::Backend(msg),
            Error::TrainingDiverged { .. } => CliError::Diverged { message: msg, checkpoint: None },
            _ => CliError::Other(msg),
        }
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
