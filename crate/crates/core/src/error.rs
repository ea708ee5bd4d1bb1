use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A row that could not be parsed. `line` is 1-based and counts the header.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// A record parsed fine but breaks a domain invariant.
    #[error("{context}: {message}")]
    Validation { context: String, message: String },

    #[error("dangling references in {context}: {}", ids.join(", "))]
    Reference { context: String, ids: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    InsufficientData(String),

    #[error("rank-deficient design, collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("unseen level `{level}` for categorical column `{column}`")]
    UnseenLevel { column: String, level: String },

    #[error("feature assembly failed: {0}")]
    Assembly(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// True for errors that stem from a bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
