use thiserror::Error;

/// Errors raised by the commitment engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generator {id}: {reason}")]
    InvalidGenerator { id: String, reason: String },

    #[error("invalid hydro unit {id}: {reason}")]
    InvalidHydro { id: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("forecast window [{start}, {end}) exceeds series length {len}")]
    WindowOutOfRange { start: usize, end: usize, len: usize },

    #[error("insufficient capacity: need {required:.3} MW, have {available:.3} MW")]
    InsufficientCapacity { required: f64, available: f64 },

    #[error("relaxed problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver stopped after {iterations} iterations without reaching stationarity")]
    MaxIterations { iterations: usize },

    #[error("no fleet prefix satisfies the capacity requirement of {required:.3} MW")]
    NoPrefixSatisfies { required: f64 },

    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that signal the fleet cannot meet the requirement,
    /// as opposed to malformed input.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::InsufficientCapacity { .. } | Error::Infeasible(_) | Error::NoPrefixSatisfies { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
