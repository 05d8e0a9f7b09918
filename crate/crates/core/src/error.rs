//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit-code classes: config (2), data (3,
/// including parse and domain failures), estimation (4) and evaluation (5).
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed input file row.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Invalid configuration (bad split points, empty grids, bad hyperparameters).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid data content (values out of range, duplicate timestamps).
    #[error("data error: {0}")]
    Data(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Estimation could not produce a usable fit.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Forecast verification failed (empty archive, non-monotone CDF).
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// An online estimator was driven from an invalid state.
    #[error("state error: {0}")]
    State(String),

    /// File system failure while reading or writing artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.position() {
            Some(pos) => Error::Parse { line: pos.line() as usize, message: e.to_string() },
            None => Error::Data(format!("csv error: {e}")),
        }
    }
}

impl Error {
    /// Process exit code class for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Domain(_) | Error::Io(_) => 3,
            Error::Estimation(_) | Error::State(_) => 4,
            Error::Evaluation(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
