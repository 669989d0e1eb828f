//! Library side of the `snapens` command-line tool.
//!
//! Every command is a plain function returning its CSV output (or the run
//! directory it wrote), so the binary only handles argument parsing, output
//! files and exit codes.

pub mod commands;
pub mod config;
pub mod sweep;

use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::usage(format!("config key `{key}`: {}", message.into()))
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<snapens::Error> for CliError {
    fn from(err: snapens::Error) -> Self {
        use snapens::Error as E;
        let code = match &err {
            E::Input(_) | E::Config { .. } => EXIT_USAGE,
            E::Diverged { .. } | E::UndefinedCorrelation { .. } => EXIT_DIVERGED,
            E::Format { .. } | E::Storage { .. } | E::Consistency(_) => EXIT_IO,
        };
        let message = match &err {
            E::Config { key, message } => format!("config key `{key}`: {message}"),
            other => other.to_string(),
        };
        CliError { code, message }
    }
}
