use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid shapes, hyperparameters or architecture descriptions.
    #[error("configuration error: {0}")]
    Config(String),

    /// Internal contract violated by the caller (e.g. backward without forward).
    #[error("usage error: {0}")]
    Usage(String),

    /// Task-stream / mask mismatch detected at runtime.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A dataset file could not be parsed.
    #[error("ingestion error in {file}: {msg}")]
    Ingest { file: PathBuf, msg: String },

    /// Dataset download failure.
    #[error("fetch error: {0}")]
    Fetch(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
