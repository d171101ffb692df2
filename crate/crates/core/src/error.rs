use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplatError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unknown instance id {0}")]
    UnknownInstance(u32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SplatError>;
