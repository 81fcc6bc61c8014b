//! Ordinary-least-squares fitting of a model to observed infectious counts.

mod multistart;
mod nelder_mead;
mod transform;

pub use multistart::{multistart_fit, start_points, FitOptions, FitResult, LocalMinimum};
pub use nelder_mead::{nelder_mead_minimize, Minimum, Tolerances, SENTINEL};
pub use transform::BoxTransform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::ode::Trajectory;

/// Observation times (days) paired with infectious counts (thousands).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    times: Vec<f64>,
    observations: Vec<f64>,
    label: String,
}

impl Dataset {
    pub fn new(times: Vec<f64>, observations: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times.len() != observations.len() {
            return Err(Error::Dimension { expected: times.len(), got: observations.len() });
        }
        if times.is_empty() {
            return Err(Error::Precondition("no observations".into()));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::Precondition(format!("non-finite observation time {t}")));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition(format!(
                "observation times must be strictly ascending ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(y) = observations.iter().find(|y| !(y.is_finite() && **y >= 0.0)) {
            return Err(Error::Precondition(format!("observations must be finite and >= 0, got {y}")));
        }
        Ok(Self { times, observations, label: label.into() })
    }

    /// Builds a dataset from `(time, observation)` rows in any order.
    pub fn from_rows(mut rows: Vec<(f64, f64)>, label: impl Into<String>) -> Result<Self> {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, observations) = rows.into_iter().unzip();
        Self::new(times, observations, label)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Time at which the initial conditions apply: the first observation.
    pub fn origin(&self) -> f64 {
        self.times[0]
    }

    pub fn max_observation(&self) -> f64 {
        self.observations.iter().copied().fold(0.0, f64::max)
    }

    /// Requires strictly more observations than parameters.
    pub fn check_size(&self, parameter_count: usize) -> Result<()> {
        if self.len() <= parameter_count {
            return Err(Error::Precondition(format!(
                "n ≤ p: {} observations for {} parameters",
                self.len(),
                parameter_count
            )));
        }
        Ok(())
    }
}

/// Selects the observed (infectious) component of the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationOperator {
    index: usize,
}

impl ObservationOperator {
    pub fn for_model(model: &ModelSpec) -> Self {
        Self { index: model.infectious_index() }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn apply(&self, trajectory: &Trajectory) -> Vec<f64> {
        trajectory.component(self.index)
    }
}

/// Model prediction of the observed component at `times`, with the initial
/// conditions applied at `origin`.
pub fn predict(model: &ModelSpec, params: &[f64], origin: f64, times: &[f64], step: f64) -> Result<Vec<f64>> {
    let trajectory = model.solve(params, origin, times, step)?;
    Ok(ObservationOperator::for_model(model).apply(&trajectory))
}

/// `Σ (I_j − I(t_j, θ))²`.
///
/// A forward solve that blows up scores [`SENTINEL`]; parameters outside the
/// model's fitting domain are an error.
pub fn ols_objective(model: &ModelSpec, dataset: &Dataset, params: &[f64], grid_step: f64) -> Result<f64> {
    model.check_layout(params)?;
    model.check_domain(params)?;
    match predict(model, params, dataset.origin(), dataset.times(), grid_step) {
        Ok(predicted) => {
            let sse: f64 = dataset
                .observations()
                .iter()
                .zip(&predicted)
                .map(|(y, f)| (y - f) * (y - f))
                .sum();
            Ok(if sse.is_finite() { sse } else { SENTINEL })
        }
        Err(Error::Integration { .. } | Error::Singularity { .. }) => Ok(SENTINEL),
        Err(e) => Err(e),
    }
}
