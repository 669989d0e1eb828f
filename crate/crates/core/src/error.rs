use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied value out of contract (shapes, ranges, counts).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Storage {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("inconsistent run: {0}")]
    Consistency(String),

    #[error("diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("correlation undefined: snapshot {snapshot} has zero-variance outputs")]
    UndefinedCorrelation { snapshot: String },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn storage(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }
}
