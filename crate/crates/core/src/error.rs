use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite objective at epoch {epoch}: {detail}")]
    Numeric { epoch: usize, detail: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
