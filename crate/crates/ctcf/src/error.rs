//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/volume/model dimensions disagree. The message names both shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Chunk is empty or falls outside the volume's slice range.
    #[error("invalid chunk: {0}")]
    InvalidChunk(String),

    /// A parameter or argument violates its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A binary or text file does not conform to its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// Run configuration failed to parse or contains unknown keys.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
