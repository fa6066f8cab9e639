use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{0}: input sequence is empty")]
    Empty(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error ({context}): {message}")]
    Validation { context: String, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}, example {example}: loss = {loss}")]
    Divergence {
        epoch: usize,
        example: usize,
        loss: f64,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from user input (bad files, flags, configs)
    /// rather than from a run going wrong.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Divergence { .. })
    }
}
