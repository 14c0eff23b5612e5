use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at coordinate {coordinate}: {what}")]
    NonFinite { coordinate: usize, what: String },

    #[error("svd did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    SvdNoConvergence { sweeps: usize, residual: f64 },

    #[error("unbalanced bracket sequence at position {position}: {reason}")]
    Unbalanced { position: usize, reason: String },

    #[error("token {token} at position {position} is not valid here")]
    BadToken { token: u32, position: usize },

    #[error("split `{split}` starved: {accepted}/{wanted} sentences after {attempts} attempts")]
    SplitStarved {
        split: String,
        accepted: usize,
        wanted: usize,
        attempts: usize,
    },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("container format: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
