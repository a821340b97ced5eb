use thiserror::Error;

#[derive(Debug, Error)]
pub enum VIError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("no iterates")]
    NoIterates,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing reference solution z*")]
    MissingSolution,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl VIError {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        VIError::Config { field, reason: reason.into() }
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(VIError::DimensionMismatch { expected, got })
        }
    }
}

pub type Result<T, E = VIError> = std::result::Result<T, E>;
