use thiserror::Error;

pub type Result<T, E = MlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("training data has a single class; nothing to separate")]
    DegenerateModel,

    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
