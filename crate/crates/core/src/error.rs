use alloc::string::String;

/// Errors raised by the model, samplers and optimisers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A spatial unit without neighbours; rows are 0-based.
    #[error("unit {row} has no neighbours")]
    DegenerateUnit { row: usize },

    #[error("rho = {rho} is outside the admissible interval ({lower}, {upper})")]
    RhoOutOfRange { rho: f64, lower: f64, upper: f64 },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
