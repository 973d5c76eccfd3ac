use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("numerical abort at step {step}: {message} (diagnostic: {diagnostic})")]
    NumericalAbort {
        step: usize,
        message: String,
        diagnostic: String,
    },

    #[error("configuration error{}: {message}", key.as_ref().map(|k| format!(" in key `{k}`")).unwrap_or_default())]
    Config { key: Option<String>, message: String },

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("suite finished with {failed} failed member run(s); partial results in {partial}")]
    SuitePartial { failed: usize, partial: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: Some(key.into()),
            message: message.into(),
        }
    }

    pub(crate) fn config_msg(message: impl Into<String>) -> Self {
        Error::Config {
            key: None,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::ArchitectureMismatch(_) => 2,
            Error::NonFinite(_) | Error::NumericalAbort { .. } => 3,
            Error::SuitePartial { .. } => 4,
            _ => 1,
        }
    }
}
