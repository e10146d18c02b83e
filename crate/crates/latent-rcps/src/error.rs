use std::path::{Path, PathBuf};

/// Everything a pipeline command can fail with.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] latent_rcps_core::Error),
    #[error(
        "calibration infeasible: no grid point keeps the risk bound at or below alpha = {alpha}"
    )]
    Infeasible { alpha: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    /// Process exit status for this failure.
    ///
    /// 1 validation, 2 I/O or malformed files, 3 numerical or training
    /// failure, 4 infeasible calibration.
    pub fn exit_code(&self) -> i32 {
        use latent_rcps_core::Error as Core;
        match self {
            Error::Config(_) | Error::Core(Core::InvalidArgument(_)) => 1,
            Error::Io { .. } | Error::Format { .. } => 2,
            Error::Core(Core::Numerical(_) | Core::TrainingFailure { .. }) => 3,
            Error::Infeasible { .. } => 4,
        }
    }
}
