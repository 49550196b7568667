use thiserror::Error;

/// Errors produced by configuration, simulation and numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("speeds must be strictly decreasing and positive: {0:?}")]
    NonDecreasingSpeeds(Vec<f64>),
    #[error("pool sizes sum to {sum}, expected n = {n}")]
    PoolSumMismatch { n: usize, sum: usize },
    #[error("capacity not normalized: sum of mu_j * gamma_j = {0}")]
    CapacityNotNormalized(f64),
    #[error("lambda = {0} is outside (0, 1)")]
    LambdaOutOfRange(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {min} batches, got {got}")]
    InsufficientBatches { min: usize, got: usize },
    #[error("truncated state space has {states} states (limit {limit})")]
    StateSpaceTooLarge { states: usize, limit: usize },
    #[error("tail component {value} went negative at t = {t}; step size too large")]
    StepTooLarge { t: f64, value: f64 },
    #[error("coupling violation at t = {t}: {detail}")]
    CouplingViolation { t: f64, detail: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("empty series")]
    EmptySeries,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code: 2 for configuration errors, 3 for invariant
    /// violations, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::StepTooLarge { .. } | Error::CouplingViolation { .. } | Error::InvariantViolation(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
