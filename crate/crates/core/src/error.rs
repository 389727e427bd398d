use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Problems with input data (malformed files, invalid designs).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration or arguments.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Sampler could not be initialized or broke down.
    #[error("sampler error: {0}")]
    Sampler(String),

    /// Numerical routine failed to produce a usable result.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
