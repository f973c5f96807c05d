use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("state became non-finite at step {step} (t = {time}, seed {seed}, path {path_index})")]
    Diverged {
        step: u64,
        time: f64,
        seed: u64,
        path_index: u64,
    },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("metric has no time derivative, which continuous propagation requires")]
    MissingMetricDerivative,

    #[error("drift is not contracting: largest symmetric-part eigenvalue {lambda} at {point:?}")]
    NotContracting { lambda: f64, point: Vec<f64> },

    #[error("noise distribution has nonzero mean {0}")]
    NonZeroMean(f64),

    #[error("noise path queried at negative time {0}")]
    NegativeTime(f64),

    #[error("operation requires a {expected} noise path")]
    WrongPathKind { expected: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;
