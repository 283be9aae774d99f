use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("finite-difference oracle failed: {0}")]
    OracleFailure(String),
    #[error("size limit exceeded: {0}")]
    Size(String),
    #[error("stale forward cache: {0}")]
    Cache(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("batch too small: {0}")]
    BatchSize(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
