use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("quadrature failed to converge for {integral}")]
    Quadrature { integral: String },

    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
