use std::path::PathBuf;

use ganbench_core::Error as CoreError;

/// Errors surfaced by the CLI, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible scene: {0}")]
    Infeasible(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing input: {}", .0.display())]
    Missing(PathBuf),
    #[error("invalid file {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(CoreError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Missing(_) | CliError::Format { .. } | CliError::Io { .. } => 5,
            CliError::Core(e) => match e {
                CoreError::InfeasibleScene(_) => 3,
                CoreError::NonFiniteLoss { .. } => 4,
                CoreError::Sink(_) => 5,
                _ => 2,
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                CliError::Missing(path)
            } else {
                CliError::Io { path, source }
            }
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl std::fmt::Display) -> CliError {
        CliError::Format {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InfeasibleScene(m) => CliError::Infeasible(m),
            other => CliError::Core(other),
        }
    }
}

pub const EXIT_OK: i32 = 0;
