use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or inconsistent inputs.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    /// A resampling or multiplexing request would fold occupied spectrum.
    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("index {index} out of range (0..{len})")]
    OutOfRange { index: usize, len: usize },

    /// A numerical procedure failed (divergence, degenerate estimate).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
