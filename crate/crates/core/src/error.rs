use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingFailure { epoch: usize, reason: String },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
