use thiserror::Error;

/// Errors raised anywhere in the laboratory.
///
/// The harness maps variants onto process exit codes: configuration problems
/// exit with 1, violated preconditions with 2 and numerical failures with 3.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("quadrature did not converge: partial value {partial:e}, residual bound {residual:e} ({context})")]
    Quadrature {
        partial: f64,
        residual: f64,
        context: String,
    },
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        LabError::Precondition(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        LabError::Numerical(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        LabError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } | LabError::Json(_) | LabError::Io(_) => 1,
            LabError::Domain(_) | LabError::Precondition(_) => 2,
            LabError::Quadrature { .. } | LabError::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
