//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data is formally valid but carries no usable signal
    /// (e.g. a constant explanatory variable).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The design matrix is numerically rank-deficient.
    #[error("rank-deficient design matrix: detected rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    /// Configuration could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
