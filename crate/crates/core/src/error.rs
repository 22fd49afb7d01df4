use thiserror::Error;

use crate::sim::RolloutLog;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The single-constraint QP has an active constraint with a vanishing normal.
    #[error("infeasible safety filter at y = {y:?}: |L_g h| = {lgh_norm:e}")]
    InfeasibleFilter { y: Vec<f64>, lgh_norm: f64 },

    #[error("constant estimation failed: {0}")]
    EstimationFailed(String),

    /// A check could not reach a verdict (no usable samples).
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    /// The rollout hit a non-finite state; the log holds every valid step up to it.
    #[error("rollout diverged at t = {t}")]
    RolloutDiverged { t: f64, log: Box<RolloutLog> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
