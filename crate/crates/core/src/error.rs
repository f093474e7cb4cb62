//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PsrError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch in {context}: expected {expected}, got {actual}")]
    GridMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("rectangle ({x0}, {y0}) + {w}x{h} exceeds bounds {nx}x{ny}")]
    OutOfBounds {
        x0: usize,
        y0: usize,
        w: usize,
        h: usize,
        nx: usize,
        ny: usize,
    },

    #[error("{path}: malformed container: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{path}: i/o error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite value in frame {frame} at pixel ({x}, {y})")]
    NonFinite { frame: usize, x: usize, y: usize },
}

impl PsrError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        PsrError::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, PsrError>;
