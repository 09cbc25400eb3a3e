use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("division by the zero polynomial")]
    DivisionByZero,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has no entries")]
    EmptyMatrix,

    #[error("cannot parse polynomial `{0}`")]
    Parse(String),

    #[error("system operator has an empty nullspace; no latent process can be attached")]
    EmptyNullspace,

    #[error("system is not controllable: non-constant invariant factor {factor}")]
    NotControllable { factor: String },

    #[error("reference state has no steady-state input: rows {rows:?} violated (residual {residual:.3e})")]
    InfeasibleReference { rows: Vec<usize>, residual: f64 },

    #[error("conflicting observations at t={t} on channel {channel}")]
    ConflictingObservation { t: f64, channel: usize },

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("covariance factorization failed even with jitter {jitter:.1e}")]
    Factorization { jitter: f64 },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("plant diverged at t={t}: |x| = {norm:.3e}")]
    PlantDivergence { t: f64, norm: f64 },

    #[error("trajectory is empty")]
    EmptyTrajectory,
}

pub type Result<T> = std::result::Result<T, Error>;
