use thiserror::Error;

use crate::defects_mc::ScanResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation error at step {step}: {message}")]
    Validation { step: usize, message: String },

    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        condition: Option<f64>,
    },

    #[error("convergence failure: {message} (estimate {estimate:.3e})")]
    Convergence {
        message: String,
        estimate: f64,
        partial: Option<Box<ScanResult>>,
    },

    #[error("singularity: {0}")]
    Singularity(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            condition: None,
        }
    }

    /// Prefixes the message with where the failure happened.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{ctx}: {m}")),
            Error::Validation { step, message } => Error::Validation { step, message: format!("{ctx}: {message}") },
            Error::Numerical { message, condition } => Error::Numerical { message: format!("{ctx}: {message}"), condition },
            Error::Convergence { message, estimate, partial } => Error::Convergence { message: format!("{ctx}: {message}"), estimate, partial },
            Error::Singularity(m) => Error::Singularity(format!("{ctx}: {m}")),
        }
    }

    /// True for failures of the input rather than of the computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::Validation { .. })
    }
}
