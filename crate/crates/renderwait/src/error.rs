//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A serialized artifact (checkpoint, PNM raster, manifest, ...) is
    /// malformed or truncated.
    #[error("format error: {0}")]
    Format(String),

    /// A scenario could not be recorded even under oracle-perfect waiting.
    #[error("record error: {0}")]
    Record(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
