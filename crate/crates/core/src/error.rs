use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid tag '{tag}': {message}")]
    Format { tag: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Usage(String),

    #[error("non-finite value in parameter '{param}'")]
    NonFinite { param: String },

    #[error("loss became NaN at batch {batch}")]
    NanLoss { batch: usize },

    #[error("gradient check failed: relative error {error:.3e} at {param}")]
    GradCheck { param: String, error: f64 },

    #[error("no gradients have been accumulated")]
    MissingGradients,

    #[error("vocabulary is frozen; cannot insert '{0}'")]
    FrozenVocab(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(tag: &str, message: impl Into<String>) -> Self {
        Error::Format {
            tag: tag.to_owned(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::NonFinite { .. } | Error::NanLoss { .. } | Error::GradCheck { .. } | Error::MissingGradients => 3,
            _ => 2,
        }
    }
}
