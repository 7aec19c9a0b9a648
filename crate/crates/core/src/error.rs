use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bracket parse error at byte {offset}: {message}")]
    Bracket { offset: usize, message: String },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("invalid tag {tag:?}: {message}")]
    InvalidTag { tag: String, message: String },

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("empty after stripping")]
    EmptyAfterStripping,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sentence length {len} exceeds maximum {max}")]
    TooLong { len: usize, max: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid_tag(tag: &str, message: impl Into<String>) -> Self {
        Error::InvalidTag {
            tag: tag.to_string(),
            message: message.into(),
        }
    }
}
