use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum ClefError {
    /// Operand dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A caller broke an operation's precondition (e.g. non-scalar loss).
    #[error("contract error: {0}")]
    Contract(String),

    /// Invalid configuration, spec, or argument value.
    #[error("validation error: {0}")]
    Validation(String),

    /// Input data cannot support the request (e.g. empty training set).
    #[error("data error: {0}")]
    Data(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("io error")]
    Io(#[from] std::io::Error),

    #[error("serialization error")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ClefError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ClefError::Shape(msg.into()))
}

pub(crate) fn validation_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ClefError::Validation(msg.into()))
}
