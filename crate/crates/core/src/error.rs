//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular nuisance block: {0}")]
    SingularNuisance(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("zero-energy spectral density")]
    ZeroEnergy,
    #[error("channel gain magnitude is zero")]
    ZeroGain,
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;
