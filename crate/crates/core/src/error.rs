use std::fmt;

use thiserror::Error;

/// Where a training computation produced a non-finite number.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub location: String,
    pub value: f64,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.location, self.value)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, invalid hyperparameters or incompatible options.
    #[error("configuration error: {0}")]
    Config(String),
    /// A call that violates an operation's precondition (empty batch, stepping a finished episode).
    #[error("usage error: {0}")]
    Usage(String),
    #[error("training error: {message} ({diagnostic})")]
    Training { message: String, diagnostic: Diagnostic },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn training(message: impl Into<String>, location: impl Into<String>, value: f64) -> Self {
        Error::Training {
            message: message.into(),
            diagnostic: Diagnostic { location: location.into(), value },
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
