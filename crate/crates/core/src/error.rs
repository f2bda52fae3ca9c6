use thiserror::Error;

/// Errors raised by the propagation, shaping and design routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or invalid configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The adaptive integrator could not make progress.
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
