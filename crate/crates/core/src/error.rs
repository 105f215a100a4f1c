use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("malformed cumulant generating function: {0}")]
    MalformedCgf(String),

    #[error("no closed-form boundary for {0}; use the numeric solver")]
    NoClosedForm(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate event: null probability {0} is not in (0, 1)")]
    DegenerateEvent(f64),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("computation failed: {0}")]
    Computation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field: field.to_string(), reason: reason.into() }
}
