use thiserror::Error;

/// Errors surfaced by the design library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario schema violation: {0}")]
    Schema(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown architecture tag `{0}`")]
    UnknownArchitecture(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    Indefinite { min_eig: f64 },

    #[error("cone program is infeasible")]
    Infeasible,

    #[error("cone program hit the iteration cap ({0} iterations)")]
    MaxIterations(usize),

    #[error("cone solver failed: {0}")]
    Numerical(String),

    /// The requested QoS threshold cannot be met within the power budget.
    /// `max_gamma` is the largest common threshold (linear scale) that the
    /// initialization found achievable.
    #[error("QoS threshold {requested:.4e} exceeds the achievable maximum {max_gamma:.4e}")]
    QosInfeasible { requested: f64, max_gamma: f64 },

    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
