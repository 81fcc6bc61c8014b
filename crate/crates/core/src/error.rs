use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A stage of the integrator produced a non-finite value.
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    /// `1 + hS` vanished in the Holling type-II incidence term.
    #[error("Holling type-II singularity: |1 + hS| = {denominator:e} at S = {susceptible}")]
    Singularity { denominator: f64, susceptible: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    /// The normal matrix of the sensitivity system is singular or too
    /// ill-conditioned to invert. `direction` is the near-null-space vector in
    /// parameter coordinates.
    #[error("parameters not identifiable: {message}")]
    NonIdentifiable { message: String, direction: Vec<f64> },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
