//! Multistart driver: many simplex runs, one reduction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nelder_mead::{nelder_mead_minimize, Minimum, Tolerances, SENTINEL};
use super::transform::BoxTransform;
use super::{ols_objective, predict, Dataset};
use crate::error::{Error, Result};
use crate::models::{basic_reproduction_number, ModelKind, ModelSpec, ParameterVector};
use crate::ode::{PositivityViolation, DEFAULT_STEP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub grid_step: f64,
    /// Additional start points tried after the heuristic one, e.g. the
    /// optimum of a nested model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_starts: Vec<ParameterVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 32,
            seed: 0,
            tolerances: Tolerances::default(),
            grid_step: DEFAULT_STEP,
            extra_starts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    pub params: ParameterVector,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub parameter_names: Vec<String>,
    pub theta_hat: ParameterVector,
    /// Sum of squared residuals at `theta_hat` (thousands²).
    pub objective: f64,
    pub n_evaluations: usize,
    pub converged: bool,
    /// Distinct minima other than `theta_hat`, best first.
    pub local_minima: Vec<LocalMinimum>,
    /// Observation minus prediction at each dataset time.
    pub residuals: Vec<f64>,
    pub n_starts: usize,
    pub failed_starts: usize,
    pub positivity_violation: Option<PositivityViolation>,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

/// Keeps a start strictly inside the fitting box.
fn pull_inside(model: &ModelSpec, mut p: Vec<f64>) -> Vec<f64> {
    for (x, b) in p.iter_mut().zip(model.domain().bounds()) {
        if b.upper.is_finite() && *x >= b.upper {
            *x = b.upper * 0.5;
        }
        if b.lower.is_finite() && *x <= b.lower {
            *x = if b.lower == 0.0 { 1e-6 } else { b.lower + 1e-6 * b.lower.abs() };
        }
    }
    p
}

fn heuristic_start(model: &ModelSpec, dataset: &Dataset) -> Vec<f64> {
    let max_obs = dataset.max_observation().max(1e-6);
    let first = dataset.observations()[0];
    let first = if first > 0.0 { first } else { 1e-2 * max_obs };
    match model.kind() {
        ModelKind::Exponential => {
            let (t0, y0) = (dataset.origin(), first);
            let last = dataset.len() - 1;
            let (t1, y1) = (dataset.times()[last], dataset.observations()[last]);
            let k = if last > 0 && y1 > 0.0 { (y1 / y0).ln() / (t1 - t0) } else { -0.5 };
            vec![y0, k]
        }
        kind => {
            let s0 = 10.0 * max_obs;
            let gamma = 0.5;
            let mut p = vec![2.0 * gamma / s0, gamma, s0, first];
            match kind {
                ModelKind::SirHolling2 => p.push(0.01 / s0),
                ModelKind::SirRecruitment => p.push(0.01 * s0),
                _ => {}
            }
            p
        }
    }
}

fn random_start<R: Rng>(model: &ModelSpec, dataset: &Dataset, rng: &mut R) -> Vec<f64> {
    let max_obs = dataset.max_observation().max(1e-6);
    let cap = model.population_cap();
    let rate = |rng: &mut R| log_uniform(rng, 1e-4, 10.0);
    match model.kind() {
        ModelKind::Exponential => {
            let i0 = log_uniform(rng, 1e-2 * max_obs, (10.0 * max_obs).min(0.5 * cap));
            vec![i0, rng.gen_range(-2.0..=2.0)]
        }
        kind => {
            let beta = rate(rng);
            let gamma = rate(rng);
            let s0 = log_uniform(rng, max_obs.min(0.5 * cap), cap);
            let i0 = log_uniform(rng, 1e-3 * max_obs, max_obs);
            let mut p = vec![beta, gamma, s0, i0];
            match kind {
                ModelKind::SirHolling2 => p.push(log_uniform(rng, 1e-6, 1e-1)),
                ModelKind::SirRecruitment => p.push(log_uniform(rng, 1e-4 * max_obs, 10.0 * max_obs)),
                _ => {}
            }
            p
        }
    }
}

/// The heuristic start, any extra starts, then `n_starts - 1` log-uniform
/// draws. Deterministic in `seed`.
pub fn start_points(model: &ModelSpec, dataset: &Dataset, options: &FitOptions) -> Vec<ParameterVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts = vec![heuristic_start(model, dataset)];
    starts.extend(options.extra_starts.iter().map(|p| p.to_vec()));
    for _ in 1..options.n_starts {
        starts.push(random_start(model, dataset, &mut rng));
    }
    starts.into_iter().map(|p| ParameterVector::new(pull_inside(model, p))).collect()
}

/// Tie-break key among minima whose objectives agree within `function_tol`.
fn tie_key(kind: ModelKind, params: &[f64]) -> f64 {
    if kind.is_sir() {
        basic_reproduction_number(kind, params).unwrap_or(f64::INFINITY)
    } else {
        0.0
    }
}

/// Runs the simplex from every start point and reduces to the best minimum
/// plus the distinct others.
pub fn multistart_fit(model: &ModelSpec, dataset: &Dataset, options: &FitOptions) -> Result<FitResult> {
    if options.n_starts == 0 {
        return Err(Error::Precondition("n_starts must be at least 1".into()));
    }
    dataset.check_size(model.parameter_count())?;
    for p in &options.extra_starts {
        model.check_layout(p)?;
    }

    let starts = start_points(model, dataset, options);
    let step = options.grid_step;
    let runs: Vec<Result<Minimum>> = starts
        .par_iter()
        .map(|start| {
            let objective = |p: &[f64]| ols_objective(model, dataset, p, step).unwrap_or(SENTINEL);
            nelder_mead_minimize(objective, start, model.domain(), &options.tolerances)
        })
        .collect();

    let mut n_evaluations = 0;
    let mut candidates = Vec::new();
    for run in runs {
        let m = run?;
        n_evaluations += m.evaluations;
        if m.value < SENTINEL {
            candidates.push(m);
        }
    }
    let failed_starts = starts.len() - candidates.len();
    if candidates.is_empty() {
        return Err(Error::FitFailure(format!(
            "all {} starts failed to produce a finite objective",
            starts.len()
        )));
    }

    // Stable sort keeps start order among exact ties.
    candidates.sort_by(|a, b| a.value.total_cmp(&b.value));
    let tol = &options.tolerances;
    let floor = candidates[0].value;
    let best_index = candidates
        .iter()
        .enumerate()
        .take_while(|(_, m)| m.value <= floor + tol.function_tol)
        .min_by(|(_, a), (_, b)| tie_key(model.kind(), &a.params).total_cmp(&tie_key(model.kind(), &b.params)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let best = candidates.remove(best_index);

    let transform = BoxTransform::new(model.domain());
    let mut kept = vec![transform.to_unbounded(&best.params)];
    let mut local_minima = Vec::new();
    for m in candidates {
        let x = transform.to_unbounded(&m.params);
        let distinct = kept.iter().all(|k| {
            k.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) > tol.dedup_tol
        });
        if distinct {
            kept.push(x);
            local_minima.push(LocalMinimum { params: m.params, objective: m.value, converged: m.converged });
        }
    }

    let trajectory = model.solve(&best.params, dataset.origin(), dataset.times(), step)?;
    let predicted = predict(model, &best.params, dataset.origin(), dataset.times(), step)?;
    let residuals = dataset.observations().iter().zip(&predicted).map(|(y, f)| y - f).collect();

    Ok(FitResult {
        model: model.kind(),
        parameter_names: model.parameter_names().iter().map(|s| s.to_string()).collect(),
        theta_hat: best.params,
        objective: best.value,
        n_evaluations,
        converged: best.converged,
        local_minima,
        residuals,
        n_starts: starts.len(),
        failed_starts,
        positivity_violation: trajectory.positivity_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: [f64; 4] = [0.0153, 0.3643, 156.6120, 2.2726];
    // Coarser grid for the replicate-heavy tests; RK4 error at this step is
    // ~1e-8 relative, far below the noise.
    const FAST_STEP: f64 = 0.01;

    fn days(n: usize) -> Vec<f64> {
        (0..n).map(|d| d as f64).collect()
    }

    fn clean(model: &ModelSpec, params: &[f64], n: usize, step: f64) -> Dataset {
        let times = days(n);
        let obs = predict(model, params, 0.0, &times, step).unwrap();
        Dataset::new(times, obs, "synthetic").unwrap()
    }

    fn options(n_starts: usize, seed: u64) -> FitOptions {
        FitOptions { n_starts, seed, grid_step: FAST_STEP, ..FitOptions::default() }
    }

    #[test]
    fn single_start_at_truth_stays_there() {
        let model = ModelSpec::new(ModelKind::SirMassAction);
        let data = clean(&model, &TABLE1, 15, FAST_STEP);
        let opts = FitOptions { extra_starts: vec![ParameterVector::new(TABLE1.to_vec())], ..options(1, 0) };
        let starts = start_points(&model, &data, &opts);
        assert_eq!(&*starts[1], &TABLE1);
        let fit = multistart_fit(&model, &data, &opts).unwrap();
        assert!(fit.objective < 1e-10, "{}", fit.objective);
        for (a, b) in fit.theta_hat.iter().zip(&TABLE1) {
            assert!(((a - b) / b).abs() < 1e-6, "{:?}", fit.theta_hat);
        }
    }

    #[test]
    fn zero_starts_is_a_precondition_error() {
        let model = ModelSpec::new(ModelKind::SirMassAction);
        let data = clean(&model, &TABLE1, 15, FAST_STEP);
        assert!(matches!(multistart_fit(&model, &data, &options(0, 0)), Err(Error::Precondition(_))));
    }

    #[test]
    fn too_few_observations() {
        let model = ModelSpec::new(ModelKind::SirMassAction);
        let data = clean(&model, &TABLE1, 3, FAST_STEP);
        let err = multistart_fit(&model, &data, &options(2, 0)).unwrap_err();
        assert!(err.to_string().contains("n ≤ p"), "{err}");
    }

    #[test]
    fn start_points_are_seeded_and_inside() {
        let model = ModelSpec::new(ModelKind::SirHolling2);
        let data = clean(&ModelSpec::new(ModelKind::SirMassAction), &TABLE1, 15, FAST_STEP);
        let a = start_points(&model, &data, &options(16, 7));
        let b = start_points(&model, &data, &options(16, 7));
        let c = start_points(&model, &data, &options(16, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|p| model.domain().contains(p)));
        // heuristic first start
        let max_obs = data.max_observation();
        assert_eq!(a[0][2], 10.0 * max_obs);
        assert_eq!(a[0][1], 0.5);
        assert_eq!(a[0][3], data.observations()[0]);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let model = ModelSpec::new(ModelKind::SirMassAction);
        let mut data = clean(&model, &TABLE1, 15, FAST_STEP);
        let noisy: Vec<f64> = data.observations().iter().enumerate().map(|(j, y)| y + 0.3 * ((j % 3) as f64 - 1.0)).collect();
        data = Dataset::new(data.times().to_vec(), noisy.iter().map(|y| y.max(0.0)).collect(), "n").unwrap();
        let a = multistart_fit(&model, &data, &options(6, 42)).unwrap();
        let b = multistart_fit(&model, &data, &options(6, 42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.theta_hat.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.theta_hat.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn result_invariants() {
        let model = ModelSpec::new(ModelKind::SirMassAction);
        let data = clean(&model, &[0.02, 0.5, 100.0, 1.0], 12, FAST_STEP);
        let fit = multistart_fit(&model, &data, &options(8, 3)).unwrap();
        let recomputed = ols_objective(&model, &data, &fit.theta_hat, FAST_STEP).unwrap();
        assert!((recomputed - fit.objective).abs() <= 1e-8 * fit.objective.max(1e-300));
        let tol = FitOptions::default().tolerances.function_tol;
        assert!(fit.local_minima.iter().all(|m| fit.objective <= m.objective + tol));
        assert_eq!(fit.residuals.len(), data.len());
        assert_eq!(fit.n_starts, 8);
    }

    #[test]
    fn noise_free_identifiability() {
        let model = ModelSpec::new(ModelKind::SirMassAction);
        for (truth, n) in [([0.01, 0.4, 120.0, 1.5], 8), ([0.03, 0.8, 60.0, 0.5], 10)] {
            let data = clean(&model, &truth, n, FAST_STEP);
            let fit = multistart_fit(&model, &data, &options(8, 11)).unwrap();
            let mean = data.observations().iter().sum::<f64>() / n as f64;
            assert!(fit.objective <= 1e-6 * mean * mean, "{truth:?}: {}", fit.objective);
        }
    }

    #[test]
    fn exponential_fit_recovers_decay() {
        let model = ModelSpec::new(ModelKind::Exponential);
        let data = clean(&model, &[40.0, -0.8], 10, FAST_STEP);
        let fit = multistart_fit(&model, &data, &options(4, 1)).unwrap();
        assert!((fit.theta_hat[0] - 40.0).abs() < 1e-4 && (fit.theta_hat[1] + 0.8).abs() < 1e-6, "{:?}", fit.theta_hat);
    }
}
