use alloc::string::String;

/// Errors raised by generators, models, training and evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible scene: {0}")]
    InfeasibleScene(String),
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    /// A checkpoint or sample sink failed (I/O in the std layer).
    #[error("output sink failed: {0}")]
    Sink(String),
    #[error("non-finite {role} loss at step {step} (last good checkpoint: {last_checkpoint:?})")]
    NonFiniteLoss {
        step: u64,
        role: String,
        last_checkpoint: Option<u64>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
