use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The result is not representable in `f64`.
    #[error("range error: {0}")]
    Range(String),

    /// An iterative or adaptive method did not reach the requested tolerance.
    #[error("accuracy error: {message} (best estimate {estimate:e}, error estimate {err_estimate:e})")]
    Accuracy {
        message: String,
        estimate: f64,
        err_estimate: f64,
    },

    /// A convergence-rate fit did not have enough resolvable points.
    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    /// A simulation stopped before completing all of its samples.
    #[error("partial result: completed {completed} of {requested} samples")]
    Partial { completed: u64, requested: u64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    /// True for errors that originate from numerical accuracy rather than bad input.
    pub fn is_accuracy(&self) -> bool {
        matches!(self, Error::Accuracy { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
