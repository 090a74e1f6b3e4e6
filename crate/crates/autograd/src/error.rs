use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutogradError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: invalid shape {shape:?}, expected {expected}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        expected: String,
    },

    #[error("tensor of shape {shape:?} needs {expected} values, got {got}")]
    ValueCount {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value produced at stage `{0}`")]
    NonFinite(String),

    #[error("non-finite gradient in parameter `{0}`, optimizer step aborted")]
    NonFiniteGradient(String),

    #[error("parameter or buffer `{0}` already exists")]
    DuplicateName(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = AutogradError> = std::result::Result<T, E>;
