//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by modeling, estimation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or violated precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A request exceeded a configured capacity limit (e.g. exact partition
    /// function for too many sites).
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A numerical routine failed (overflow, non-finite intermediate).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A symmetric system was rank deficient; `coords` names the offending
    /// coordinates in human-readable form.
    #[error("rank-deficient system at coordinate(s) {coords:?}")]
    RankDeficient { coords: Vec<String> },

    /// Feature selection could not produce the requested number of sites.
    #[error("insufficient features: {0}")]
    InsufficientFeatures(String),

    /// Malformed input data (peak lists, CSV matrices, JSON documents).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
