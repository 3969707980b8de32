use std::fmt;

use jumpld_core::Error as CoreError;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or incomplete configuration (exit 2).
    Schema(String),
    /// A numerical routine failed (exit 3).
    Numerical(String),
    /// The run finished but some checks failed (exit 1).
    ChecksFailed(String),
    /// Reading or writing files failed (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ChecksFailed(_) | CliError::Io(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn missing(field: &str, command: &str) -> Self {
        CliError::Schema(format!("`{field}`: required by `{command}`"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::ChecksFailed(m) => write!(f, "checks failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config { .. } | CoreError::Dimension(_) => CliError::Schema(e.to_string()),
            CoreError::Quadrature { .. } | CoreError::NonFinite { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
