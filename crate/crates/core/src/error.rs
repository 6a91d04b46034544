//! Error taxonomy shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition
    /// (non-finite input, empty path budget, horizon <= 0, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Breakpoints or probe times do not land on the integration grid.
    #[error("grid alignment: {0}")]
    Alignment(String),

    /// A computation produced a non-finite value; the message carries the
    /// offending location (path index, time, quadrature cell, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A Gaussian conditional law is degenerate (the conditioning variable
    /// exhausts the variance of the increments).
    #[error("degenerate conditional law: {0}")]
    Conditioning(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn alignment(msg: impl Into<String>) -> Self {
        Error::Alignment(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

/// Rejects non-finite scalars with a uniform message.
pub fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::invalid(format!("{what} must be finite, got {value}")))
    }
}
