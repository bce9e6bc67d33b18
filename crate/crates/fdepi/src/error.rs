use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum FdaError {
    /// Invalid argument or precondition violation. Message names the field.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Shape or grid mismatch between inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A linear solve, eigendecomposition or iteration failed.
    #[error("numerical failure in {module}::{op}: {detail}")]
    Numerical {
        module: &'static str,
        op: &'static str,
        detail: String,
    },

    #[error("csv error in {path}: {detail}")]
    Csv { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FdaError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        FdaError::Invalid(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        FdaError::Dimension(msg.into())
    }

    pub fn numerical(module: &'static str, op: &'static str, detail: impl Into<String>) -> Self {
        FdaError::Numerical {
            module,
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FdaError>;
