//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("image i/o error at {path}: {message}")]
    ImageIo { path: PathBuf, message: String },

    #[error("unsupported image format `{0}`")]
    UnsupportedFormat(String),

    #[error("refusing lossy format `{0}` for perturbed output; use png")]
    LossyFormat(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("gradient estimation failed: loss at sample {sample} is not finite ({value})")]
    NonFiniteLoss { sample: usize, value: f64 },

    #[error("loss term {term} failed: {source}")]
    LossTerm {
        term: &'static str,
        #[source]
        source: BackendError,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

/// Failures talking to a remote (or mock) model / embedding service.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("protocol error: status {status}: {body}")]
    Protocol { status: u16, body: String },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),
}
