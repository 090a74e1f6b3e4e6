use std::path::PathBuf;

use nf_autograd::AutogradError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("class {0:?} has no positive training rows")]
    EmptyPositiveSet(String),

    #[error("configuration mismatch: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}: manifest version {found}, this build reads version {expected}")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: checksum mismatch (file truncated or modified)")]
    Checksum { path: PathBuf },

    #[error(transparent)]
    Engine(#[from] AutogradError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
