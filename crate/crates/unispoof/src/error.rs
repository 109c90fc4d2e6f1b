use std::path::{Path, PathBuf};

/// Failures of the file layer and the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] unispoof_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 1 for bad input or configuration, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use unispoof_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Format { .. } => 1,
            CliError::Core(
                E::Diverged { .. }
                | E::DetachedGraph
                | E::BackwardTwice
                | E::MissingGradient(_)
                | E::NonScalarLoss(_),
            ) => 2,
            CliError::Core(_) => 1,
            CliError::Io { .. } | CliError::Failed(_) => 2,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, msg: impl std::fmt::Display) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
