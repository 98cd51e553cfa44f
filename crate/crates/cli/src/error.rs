use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(spincut_core::Error),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config { field: field.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for bad configuration, 3 for numerical
    /// failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl From<spincut_core::Error> for CliError {
    fn from(e: spincut_core::Error) -> Self {
        match e {
            spincut_core::Error::Argument { field, reason } => CliError::Config { field: field.to_string(), reason },
            other => CliError::Numerical(other),
        }
    }
}
