use thiserror::Error;

/// Errors raised by the simulation and verification layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A computation produced a non-finite or otherwise unusable number.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An experiment was requested outside the exponent range its inequality covers.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    /// The generator failed its contraction certificate for the chosen norm.
    #[error("generator rejected: {0}")]
    NotContractive(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
