//! Crate-wide error type.

use std::fmt;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the public API.
#[derive(Debug)]
pub enum Error {
    /// An argument violated an operation's precondition (shape mismatch,
    /// out-of-range label, non-monotone bin edges, ...).
    InvalidInput(String),
    /// A configuration value is unusable (batch size larger than the
    /// dataset, degenerate validation split, q out of range, ...).
    InvalidConfig(String),
    /// A local-risk query hit a ball with no same-class samples. The caller
    /// decides the fallback.
    EmptyNeighborhood,
    /// An optimization run produced a non-finite loss.
    TrainingFailure(String),
    /// File I/O failed.
    Io(std::io::Error),
    /// A checkpoint, dataset, or config file could not be decoded.
    Format(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Error::EmptyNeighborhood => write!(f, "no same-class samples inside the query ball"),
            Error::TrainingFailure(msg) => write!(f, "training failure: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}
