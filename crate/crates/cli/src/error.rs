use std::path::PathBuf;

use mmred_core::{Error as CoreError, ErrorKind};
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARSE: u8 = 1;
pub const EXIT_PRECONDITION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("certification failed: {0}")]
    NotCertified(String),
}

impl CliError {
    /// 1 for unreadable or malformed input, 2 for violated mathematical
    /// preconditions (including a failed certification), 3 for numerical
    /// breakdown.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Format { .. } | CliError::Usage(_) | CliError::Io { .. } => EXIT_PARSE,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Precondition => EXIT_PRECONDITION,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            },
            CliError::NotCertified(_) => EXIT_PRECONDITION,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
