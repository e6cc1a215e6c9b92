use thiserror::Error;

/// Errors raised by model construction, sampling and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rate matrix: {0}")]
    InvalidGenerator(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid interval [{start}, {end}]")]
    InvalidInterval { start: f64, end: f64 },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("dominating rate {omega} does not exceed max exit rate {max_rate}")]
    DominatingRate { omega: f64, max_rate: f64 },

    #[error("duplicate event time {0} while merging jump sets")]
    DuplicateTime(f64),

    #[error(
        "observations are impossible under the model (all-zero forward message at step {step})"
    )]
    ImpossibleData { step: usize },

    #[error("stationary distribution is not unique (null space dimension {0})")]
    NonUniqueStationary(usize),

    #[error("product state space of size {size} exceeds cap {cap}")]
    StateSpaceTooLarge { size: usize, cap: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
