use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the separation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown clip: no caption registered for fingerprint {0}")]
    UnknownClip(String),

    #[error("backend error after {retries} retries: {message}")]
    Backend { message: String, retries: u32 },

    #[error("could not parse backend response: {raw:?}")]
    Parse { raw: String },

    #[error("reference signals are degenerate (gram condition number {condition:.3e})")]
    DegenerateReferences { condition: f64 },

    #[error("training diverged at epoch {epoch}, step {step}")]
    TrainingDiverged {
        epoch: usize,
        step: usize,
        /// State at the start of the epoch that produced a non-finite loss.
        last_good: Box<crate::separator::TrainState>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
