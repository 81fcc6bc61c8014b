//! Asymptotic OLS uncertainty from finite-difference sensitivities.
//!
//! With `D` the `n × p` matrix of `∂I(t_j, θ)/∂θ_k` at the fit and
//! `σ̂² = LL(θ̂)/(n − p)`, the covariance is `σ̂² (DᵀD)⁻¹`. Intervals are
//! `θ̂ ± 2 SE`. Reproduction number and infectious period get two intervals:
//! endpoint interval arithmetic on the parameter intervals, and the delta
//! method on the full covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{predict, Dataset, FitResult};
use crate::models::{
    basic_reproduction_number, mean_infectious_period, ModelKind, ModelSpec, BETA, EXP_RATE, EXTRA, GAMMA, S0,
};

pub const DEFAULT_REL_STEP: f64 = 1e-4;

/// Normal matrices whose column-equilibrated condition number reaches this
/// are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub const COVARIANCE_FORMULA: &str = "sigma2_hat * inverse(sum_j D_j^T D_j)";

pub const INTERVAL_LABEL: &str = "estimate +/- 2 SE (approx. 95%)";

/// `∂I(t_j, θ)/∂θ_k`, one row per observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    pub parameter_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Columns that fell back to a one-sided difference because a central
    /// perturbation left the exploration domain or failed to integrate.
    pub one_sided: Vec<bool>,
}

impl SensitivityMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows(), self.n_cols(), |i, j| self.rows[i][j])
    }
}

/// Central finite differences with `δ_k = rel_step · max(|θ_k|, 10⁻⁶)`,
/// each side a full forward solve. Perturbations are allowed anywhere in
/// the model's exploration domain.
pub fn sensitivity_matrix(
    model: &ModelSpec,
    origin: f64,
    times: &[f64],
    theta: &[f64],
    rel_step: f64,
    grid_step: f64,
) -> Result<SensitivityMatrix> {
    if !(rel_step > 0.0 && rel_step.is_finite()) {
        return Err(Error::Precondition(format!("rel_step must be > 0, got {rel_step}")));
    }
    let domain = model.exploration_domain();
    domain.check(theta, &model.parameter_names())?;
    let p = theta.len();
    let names = model.parameter_names();

    let eval = |point: &[f64]| -> Option<Vec<f64>> {
        if !domain.contains(point) {
            return None;
        }
        predict(model, point, origin, times, grid_step).ok()
    };
    let center = predict(model, theta, origin, times, grid_step)?;

    let mut columns = Vec::with_capacity(p);
    let mut one_sided = Vec::with_capacity(p);
    for k in 0..p {
        let delta = rel_step * theta[k].abs().max(1e-6);
        let mut plus = theta.to_vec();
        plus[k] += delta;
        let mut minus = theta.to_vec();
        minus[k] -= delta;
        let (column, fallback) = match (eval(&plus), eval(&minus)) {
            (Some(up), Some(down)) => {
                (up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * delta)).collect::<Vec<_>>(), false)
            }
            (Some(up), None) => (up.iter().zip(&center).map(|(u, c)| (u - c) / delta).collect(), true),
            (None, Some(down)) => (center.iter().zip(&down).map(|(c, d)| (c - d) / delta).collect(), true),
            (None, None) => {
                return Err(Error::Domain(format!(
                    "cannot perturb {} = {} by {delta:e} in either direction",
                    names[k], theta[k]
                )))
            }
        };
        if let Some(v) = column.iter().find(|v| !v.is_finite()) {
            return Err(Error::Integration {
                time: origin,
                reason: format!("non-finite sensitivity {v} for {}", names[k]),
            });
        }
        columns.push(column);
        one_sided.push(fallback);
    }

    let rows = (0..times.len()).map(|j| columns.iter().map(|c| c[j]).collect()).collect();
    Ok(SensitivityMatrix {
        parameter_names: names.iter().map(|s| s.to_string()).collect(),
        rows,
        one_sided,
    })
}

/// `LL(θ̂)/(n − p)`.
pub fn estimate_sigma2(objective_at_min: f64, n: usize, p: usize) -> Result<f64> {
    if n <= p {
        return Err(Error::Domain(format!("n ≤ p: cannot estimate sigma^2 from {n} observations and {p} parameters")));
    }
    if !(objective_at_min >= 0.0) {
        return Err(Error::Domain(format!("objective must be >= 0, got {objective_at_min}")));
    }
    Ok(objective_at_min / (n - p) as f64)
}

/// `σ² (DᵀD)⁻¹`.
///
/// Inversion goes through the column-equilibrated normal matrix, whose
/// condition number decides identifiability; raw column scales differ by
/// many orders of magnitude between rates and populations.
pub fn covariance_matrix(sensitivity: &SensitivityMatrix, sigma2: f64) -> Result<DMatrix<f64>> {
    let d = sensitivity.to_matrix();
    let p = d.ncols();
    let normal = d.transpose() * &d;
    let names = &sensitivity.parameter_names;

    let scale: Vec<f64> = (0..p).map(|k| normal[(k, k)].sqrt()).collect();
    if let Some(k) = scale.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        let mut direction = vec![0.0; p];
        direction[k] = 1.0;
        return Err(Error::NonIdentifiable {
            message: format!("{} has no observable effect (zero sensitivity column)", names[k]),
            direction,
        });
    }

    let equilibrated = DMatrix::from_fn(p, p, |i, j| normal[(i, j)] / (scale[i] * scale[j]));
    let eigen = SymmetricEigen::new(equilibrated.clone());
    let (min_idx, min_eig) = eigen
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("p >= 1");
    let max_eig = eigen.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
    let condition = if min_eig > 0.0 { max_eig / min_eig } else { f64::INFINITY };
    if condition >= MAX_CONDITION {
        let v = eigen.eigenvectors.column(min_idx);
        let mut direction: Vec<f64> = (0..p).map(|k| v[k] / scale[k]).collect();
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        direction.iter_mut().for_each(|x| *x /= norm);
        let dominant = direction
            .iter()
            .enumerate()
            .filter(|(_, x)| x.abs() > 0.1)
            .map(|(k, x)| format!("{:+.3}·{}", x, names[k]))
            .collect::<Vec<_>>()
            .join(" ");
        return Err(Error::NonIdentifiable {
            message: format!("normal matrix condition number {condition:.3e}; near-null direction {dominant}"),
            direction,
        });
    }

    let inverse = equilibrated
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NonIdentifiable {
            message: "normal matrix is not positive definite".into(),
            direction: vec![0.0; p],
        })?;
    let mut cov = DMatrix::from_fn(p, p, |i, j| sigma2 * inverse[(i, j)] / (scale[i] * scale[j]));
    // exact symmetry
    for i in 0..p {
        for j in 0..i {
            let m = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = m;
            cov[(j, i)] = m;
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterInterval {
    pub name: String,
    pub lower: f64,
    pub estimate: f64,
    pub upper: f64,
    pub standard_error: f64,
    pub contains_zero: bool,
}

/// `θ̂_k ± 2 √cov[k,k]`.
pub fn confidence_intervals(names: &[&str], theta: &[f64], covariance: &DMatrix<f64>) -> Result<Vec<ParameterInterval>> {
    if covariance.nrows() != theta.len() || covariance.ncols() != theta.len() {
        return Err(Error::Dimension { expected: theta.len(), got: covariance.nrows() });
    }
    theta
        .iter()
        .enumerate()
        .map(|(k, &estimate)| {
            let var = covariance[(k, k)];
            if !(var >= 0.0) {
                return Err(Error::Domain(format!("negative variance {var} for {}", names[k])));
            }
            let se = var.sqrt();
            let (lower, upper) = (estimate - 2.0 * se, estimate + 2.0 * se);
            Ok(ParameterInterval {
                name: names[k].to_string(),
                lower,
                estimate,
                upper,
                standard_error: se,
                contains_zero: lower <= 0.0 && upper >= 0.0,
            })
        })
        .collect()
}

/// Endpoint interval arithmetic for the derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedIntervals {
    pub r0: Option<(f64, f64)>,
    pub infectious_period: (f64, f64),
}

/// Propagates per-parameter `(lower, upper)` intervals through `R₀` and the
/// mean infectious period. Both are monotone in each argument, so the
/// extremes sit at interval endpoints.
pub fn derived_intervals(kind: ModelKind, intervals: &[(f64, f64)]) -> Result<DerivedIntervals> {
    if intervals.len() != kind.parameter_count() {
        return Err(Error::Dimension { expected: kind.parameter_count(), got: intervals.len() });
    }
    let names = kind.parameter_names();
    let positive = |k: usize| -> Result<(f64, f64)> {
        let (lo, hi) = intervals[k];
        if !(lo > 0.0) || hi < lo {
            return Err(Error::Domain(format!(
                "interval for {} is ({lo}, {hi}); interval arithmetic needs a positive lower endpoint",
                names[k]
            )));
        }
        Ok((lo, hi))
    };

    if kind == ModelKind::Exponential {
        let (lo, hi) = intervals[EXP_RATE];
        if lo <= 0.0 && hi >= 0.0 {
            return Err(Error::Domain(format!("k interval ({lo}, {hi}) contains 0")));
        }
        let (small, large) = if lo > 0.0 { (lo, hi) } else { (-hi, -lo) };
        return Ok(DerivedIntervals { r0: None, infectious_period: (1.0 / large, 1.0 / small) });
    }

    let (beta_lo, beta_hi) = positive(BETA)?;
    let (gamma_lo, gamma_hi) = positive(GAMMA)?;
    let (s0_lo, s0_hi) = positive(S0)?;
    let r0 = if kind == ModelKind::SirHolling2 {
        // βS₀/((1 + hS₀)γ) decreases in h and increases in S₀.
        let (h_lo, h_hi) = intervals[EXTRA];
        let sat = |s: f64, h: f64| -> Result<f64> {
            let d = 1.0 + h * s;
            if !(d > 0.0) {
                return Err(Error::Domain(format!("1 + hS0 = {d} at h = {h}, S0 = {s}")));
            }
            Ok(s / d)
        };
        (beta_lo * sat(s0_lo, h_hi)? / gamma_hi, beta_hi * sat(s0_hi, h_lo)? / gamma_lo)
    } else {
        (beta_lo * s0_lo / gamma_hi, beta_hi * s0_hi / gamma_lo)
    };
    Ok(DerivedIntervals { r0: Some(r0), infectious_period: (1.0 / gamma_hi, 1.0 / gamma_lo) })
}

/// First-order (delta-method) estimate: point, SE, and ±2 SE bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub point: f64,
    pub standard_error: f64,
    pub lower: f64,
    pub upper: f64,
}

fn delta(point: f64, gradient: &[f64], covariance: &DMatrix<f64>) -> DeltaEstimate {
    let p = gradient.len();
    let mut var = 0.0;
    for i in 0..p {
        for j in 0..p {
            var += gradient[i] * covariance[(i, j)] * gradient[j];
        }
    }
    let se = var.max(0.0).sqrt();
    DeltaEstimate { point, standard_error: se, lower: point - 2.0 * se, upper: point + 2.0 * se }
}

pub fn delta_method_r0(kind: ModelKind, theta: &[f64], covariance: &DMatrix<f64>) -> Result<DeltaEstimate> {
    let r0 = basic_reproduction_number(kind, theta)?;
    let (beta, gamma, s0) = (theta[BETA], theta[GAMMA], theta[S0]);
    let mut g = vec![0.0; theta.len()];
    match kind {
        ModelKind::SirHolling2 => {
            let h = theta[EXTRA];
            let d = 1.0 + h * s0;
            g[BETA] = s0 / (d * gamma);
            g[GAMMA] = -r0 / gamma;
            g[S0] = beta / (d * d * gamma);
            g[EXTRA] = -beta * s0 * s0 / (d * d * gamma);
        }
        _ => {
            g[BETA] = s0 / gamma;
            g[GAMMA] = -r0 / gamma;
            g[S0] = beta / gamma;
        }
    }
    Ok(delta(r0, &g, covariance))
}

pub fn delta_method_infectious_period(kind: ModelKind, theta: &[f64], covariance: &DMatrix<f64>) -> Result<DeltaEstimate> {
    let period = mean_infectious_period(kind, theta)?;
    let mut g = vec![0.0; theta.len()];
    if kind.is_sir() {
        g[GAMMA] = -1.0 / (theta[GAMMA] * theta[GAMMA]);
    } else {
        let k = theta[EXP_RATE];
        g[EXP_RATE] = -k.signum() / (k * k);
    }
    Ok(delta(period, &g, covariance))
}

/// A derived quantity with both interval styles. `interval_arithmetic` is
/// absent when a parameter interval reaches zero; the reason is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantity {
    pub point: f64,
    pub interval_arithmetic: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_arithmetic_error: Option<String>,
    pub delta_method: DeltaEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    pub r0: Option<DerivedQuantity>,
    pub infectious_period: Option<DerivedQuantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub sigma2_hat: f64,
    pub covariance: Vec<Vec<f64>>,
    pub covariance_formula: String,
    pub interval_label: String,
    pub standard_errors: Vec<f64>,
    pub intervals: Vec<ParameterInterval>,
    pub derived: DerivedQuantities,
    pub rel_step: f64,
    /// Parameters whose sensitivity column used a one-sided difference.
    pub one_sided: Vec<String>,
}

impl UncertaintyReport {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let p = self.covariance.len();
        DMatrix::from_fn(p, p, |i, j| self.covariance[i][j])
    }
}

/// Full pipeline at a fitted point: sensitivities, σ̂², covariance,
/// intervals, derived quantities.
pub fn quantify(
    model: &ModelSpec,
    dataset: &Dataset,
    fit: &FitResult,
    rel_step: f64,
    grid_step: f64,
) -> Result<UncertaintyReport> {
    let theta = &fit.theta_hat;
    let p = model.parameter_count();
    let sigma2 = estimate_sigma2(fit.objective, dataset.len(), p)?;
    let sens = sensitivity_matrix(model, dataset.origin(), dataset.times(), theta, rel_step, grid_step)?;
    let cov = covariance_matrix(&sens, sigma2)?;
    let names = model.parameter_names();
    let intervals = confidence_intervals(&names, theta, &cov)?;
    let bounds: Vec<(f64, f64)> = intervals.iter().map(|iv| (iv.lower, iv.upper)).collect();
    let kind = model.kind();

    let arithmetic = derived_intervals(kind, &bounds);
    let (r0_bounds, period_bounds, arithmetic_error) = match arithmetic {
        Ok(d) => (d.r0, Some(d.infectious_period), None),
        Err(e) => (None, None, Some(e.to_string())),
    };

    let r0 = if kind.is_sir() {
        Some(DerivedQuantity {
            point: basic_reproduction_number(kind, theta)?,
            interval_arithmetic: r0_bounds,
            interval_arithmetic_error: arithmetic_error.clone(),
            delta_method: delta_method_r0(kind, theta, &cov)?,
        })
    } else {
        None
    };
    let infectious_period = match mean_infectious_period(kind, theta) {
        Ok(point) => Some(DerivedQuantity {
            point,
            interval_arithmetic: period_bounds,
            interval_arithmetic_error: arithmetic_error,
            delta_method: delta_method_infectious_period(kind, theta, &cov)?,
        }),
        Err(_) => None,
    };

    Ok(UncertaintyReport {
        sigma2_hat: sigma2,
        covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        covariance_formula: COVARIANCE_FORMULA.into(),
        interval_label: INTERVAL_LABEL.into(),
        standard_errors: intervals.iter().map(|iv| iv.standard_error).collect(),
        intervals,
        derived: DerivedQuantities { r0, infectious_period },
        rel_step,
        one_sided: names
            .iter()
            .zip(&sens.one_sided)
            .filter(|(_, f)| **f)
            .map(|(n, _)| n.to_string())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::DEFAULT_STEP;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TABLE1: [f64; 4] = [0.0153, 0.3643, 156.6120, 2.2726];

    fn from_rows(rows: Vec<Vec<f64>>) -> SensitivityMatrix {
        let p = rows[0].len();
        SensitivityMatrix {
            parameter_names: (0..p).map(|k| format!("p{k}")).collect(),
            rows,
            one_sided: vec![false; p],
        }
    }

    #[test]
    fn exponential_sensitivity_to_initial_value() {
        let model = ModelSpec::new(ModelKind::Exponential);
        let s = sensitivity_matrix(&model, 0.0, &[3.0], &[2.0, 0.0], DEFAULT_REL_STEP, DEFAULT_STEP).unwrap();
        assert!((s.rows[0][0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn exponential_sensitivity_to_rate() {
        let model = ModelSpec::new(ModelKind::Exponential);
        let s = sensitivity_matrix(&model, 0.0, &[2.0], &[1.0, 0.5], DEFAULT_REL_STEP, DEFAULT_STEP).unwrap();
        let exact = 2.0 * 1f64.exp();
        assert_relative_eq!(s.rows[0][1], exact, max_relative = 1e-6);
        assert!((exact - 5.43656).abs() < 1e-5);
    }

    #[test]
    fn exponential_sensitivities_converge_at_second_order() {
        let model = ModelSpec::new(ModelKind::Exponential);
        let times = [0.5, 1.0, 2.0, 4.0];
        let theta = [3.0, -0.7];
        let analytic = |t: f64| [(theta[1] * t).exp(), t * theta[0] * (theta[1] * t).exp()];
        let discrepancy = |rel: f64| -> Vec<[f64; 2]> {
            let s = sensitivity_matrix(&model, 0.0, &times, &theta, rel, DEFAULT_STEP).unwrap();
            times
                .iter()
                .zip(&s.rows)
                .map(|(t, r)| {
                    let a = analytic(*t);
                    [((r[0] - a[0]) / a[0]).abs(), ((r[1] - a[1]) / a[1]).abs()]
                })
                .collect()
        };
        let coarse = discrepancy(1e-4);
        let fine = discrepancy(5e-5);
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(c[0] < 1e-5 && c[1] < 1e-5, "{c:?}");
            // I₀ is linear, so only rounding remains; the rate column is curved.
            let ratio = c[1] / f[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn sir_gamma_column_is_richardson_consistent() {
        let model = ModelSpec::new(ModelKind::SirMassAction);
        let times: Vec<f64> = (0..15).map(f64::from).collect();
        let gamma_col = |rel: f64| {
            sensitivity_matrix(&model, 0.0, &times, &TABLE1, rel, DEFAULT_STEP).unwrap().column(GAMMA)
        };
        // Large steps so truncation dominates integration rounding.
        let (d1, d2, d4) = (gamma_col(4e-2), gamma_col(2e-2), gamma_col(1e-2));
        let at_default = gamma_col(DEFAULT_REL_STEP);
        for j in 3..times.len() {
            let ratio = (d1[j] - d2[j]) / (d2[j] - d4[j]);
            assert!((3.5..=4.5).contains(&ratio), "t = {j}: ratio {ratio}");
            // Richardson extrapolation from the two finer steps
            let extrapolated = d4[j] + (d4[j] - d2[j]) / 3.0;
            assert!((at_default[j] - extrapolated).abs() <= 1e-5 * extrapolated.abs().max(1.0));
        }
    }

    #[test]
    fn perturbation_leaving_domain_falls_back_to_one_sided() {
        let model = ModelSpec::with_population_cap(ModelKind::SirMassAction, 200.0);
        let theta = [0.0153, 0.3643, 200.0 * (1.0 - 1e-6), 2.2726];
        let times: Vec<f64> = (0..8).map(f64::from).collect();
        let s = sensitivity_matrix(&model, 0.0, &times, &theta, DEFAULT_REL_STEP, DEFAULT_STEP).unwrap();
        assert_eq!(s.one_sided, vec![false, false, true, false]);
    }

    #[test]
    fn sigma2_estimator() {
        assert_eq!(estimate_sigma2(0.0, 15, 4).unwrap(), 0.0);
        assert_eq!(estimate_sigma2(12.0, 16, 4).unwrap(), 1.0);
        assert!(estimate_sigma2(1.0, 4, 4).is_err());
    }

    #[test]
    fn covariance_of_identity_sensitivity() {
        let d = from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let cov = covariance_matrix(&d, 4.0).unwrap();
        assert_relative_eq!(cov, DMatrix::identity(2, 2) * 4.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_column_is_not_identifiable() {
        let d = from_rows(vec![vec![1.0, 0.0, 2.0], vec![0.5, 0.0, 1.0], vec![3.0, 0.0, -1.0]]);
        match covariance_matrix(&d, 1.0) {
            Err(Error::NonIdentifiable { direction, message }) => {
                assert_eq!(direction, vec![0.0, 1.0, 0.0]);
                assert!(message.contains("p1"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collinear_columns_name_the_null_direction() {
        let d = from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        match covariance_matrix(&d, 1.0) {
            Err(Error::NonIdentifiable { direction, .. }) => {
                // 2·col0 − col1 = 0
                let ratio = direction[0] / direction[1];
                assert!((ratio + 2.0).abs() < 1e-6, "{direction:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn doubling_sensitivities_quarters_covariance() {
        let rows = vec![vec![1.0, 0.3, 2.0], vec![0.2, 1.5, -0.4], vec![2.2, 0.1, 0.9], vec![0.7, -1.0, 0.3]];
        let base = covariance_matrix(&from_rows(rows.clone()), 1.7).unwrap();
        let doubled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| 2.0 * x).collect()).collect();
        let scaled = covariance_matrix(&from_rows(doubled), 1.7).unwrap();
        assert_relative_eq!(scaled * 4.0, base, max_relative = 1e-12);
    }

    #[test]
    fn intervals_reproduce_table_rows() {
        let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.04065f64.powi(2), 0.8050f64.powi(2), 0.0]));
        let iv = confidence_intervals(&["gamma", "I0", "x"], &[0.3643, 2.2726, 5.0], &cov).unwrap();
        assert!((iv[0].lower - 0.2830).abs() < 5e-5 && (iv[0].upper - 0.4456).abs() < 5e-5);
        assert!((iv[1].lower - 0.6626).abs() < 5e-5 && (iv[1].upper - 3.8826).abs() < 5e-5);
        assert_eq!((iv[2].lower, iv[2].upper), (5.0, 5.0));
        assert!(!iv[0].contains_zero);
    }

    #[test]
    fn derived_from_table1_intervals() {
        let intervals = [(0.0130, 0.0177), (0.2830, 0.4456), (139.0034, 174.2207), (0.6626, 3.8827)];
        let d = derived_intervals(ModelKind::SirMassAction, &intervals).unwrap();
        let (lo, hi) = d.r0.unwrap();
        assert!((lo - 4.05).abs() <= 0.02 && (hi - 10.91).abs() <= 0.02, "({lo}, {hi})");
        assert_relative_eq!(lo, 0.0130 * 139.0034 / 0.4456, max_relative = 1e-14);
        assert_relative_eq!(hi, 0.0177 * 174.2207 / 0.2830, max_relative = 1e-14);
        let (plo, phi) = d.infectious_period;
        assert!((plo - 2.244).abs() < 1e-3 && (phi - 3.534).abs() < 1e-3);
    }

    #[test]
    fn degenerate_intervals_give_point_values() {
        let p = TABLE1;
        let intervals: Vec<(f64, f64)> = p.iter().map(|x| (*x, *x)).collect();
        let d = derived_intervals(ModelKind::SirMassAction, &intervals).unwrap();
        let r0 = basic_reproduction_number(ModelKind::SirMassAction, &p).unwrap();
        assert_eq!(d.r0.unwrap(), (r0, r0));
        assert_eq!(d.infectious_period, (1.0 / p[1], 1.0 / p[1]));
    }

    #[test]
    fn nonpositive_lower_endpoint_is_rejected() {
        let intervals = [(-0.001, 0.02), (0.2, 0.4), (100.0, 200.0), (1.0, 2.0)];
        assert!(matches!(derived_intervals(ModelKind::SirMassAction, &intervals), Err(Error::Domain(_))));
    }

    #[test]
    fn holling_interval_tolerates_negative_handling_time() {
        let intervals = [(0.0130, 0.0177), (0.2830, 0.4456), (139.0, 174.2), (0.66, 3.88), (-0.0005, 0.0034)];
        let d = derived_intervals(ModelKind::SirHolling2, &intervals).unwrap();
        let (lo, hi) = d.r0.unwrap();
        assert_relative_eq!(lo, 0.0130 * 139.0 / (1.0 + 0.0034 * 139.0) / 0.4456, max_relative = 1e-14);
        assert_relative_eq!(hi, 0.0177 * 174.2 / (1.0 - 0.0005 * 174.2) / 0.2830, max_relative = 1e-14);
    }

    #[test]
    fn delta_method_matches_finite_difference_gradient() {
        let theta = [0.0153, 0.3643, 156.6120, 2.2726, 0.002];
        let cov = DMatrix::from_fn(5, 5, |i, j| if i == j { 1e-4 * (i + 1) as f64 } else { 1e-6 });
        let est = delta_method_r0(ModelKind::SirHolling2, &theta, &cov).unwrap();
        // independent gradient by central differences
        let f = |p: &[f64]| basic_reproduction_number(ModelKind::SirHolling2, p).unwrap();
        let g: Vec<f64> = (0..5)
            .map(|k| {
                let e = 1e-6 * theta[k].abs().max(1e-6);
                let mut a = theta.to_vec();
                let mut b = theta.to_vec();
                a[k] += e;
                b[k] -= e;
                (f(&a) - f(&b)) / (2.0 * e)
            })
            .collect();
        let mut var = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                var += g[i] * cov[(i, j)] * g[j];
            }
        }
        assert_relative_eq!(est.standard_error, var.sqrt(), max_relative = 1e-6);
        assert_eq!(est.lower, est.point - 2.0 * est.standard_error);
    }

    proptest! {
        #[test]
        fn covariance_is_symmetric_psd(rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 6..12), s2 in 0.01f64..10.0) {
            let d = from_rows(rows);
            if let Ok(cov) = covariance_matrix(&d, s2) {
                let trace = cov.trace();
                for i in 0..3 {
                    prop_assert!(cov[(i, i)] >= 0.0);
                    for j in 0..3 {
                        prop_assert!((cov[(i, j)] - cov[(j, i)]).abs() <= 1e-10 * cov[(i, j)].abs().max(1e-300));
                    }
                }
                let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
                prop_assert!(eig.iter().all(|e| *e >= -1e-8 * trace));
            }
        }

        #[test]
        fn widening_never_narrows_r0_interval(
            widen in 0usize..3,
            lo_extra in 0.0f64..0.5,
            hi_extra in 0.0f64..0.5,
        ) {
            let base = [(0.0130, 0.0177), (0.2830, 0.4456), (139.0034, 174.2207), (0.6626, 3.8827)];
            let mut wide = base;
            let (lo, hi) = wide[widen];
            wide[widen] = (lo * (1.0 - lo_extra * 0.9), hi * (1.0 + hi_extra));
            let a = derived_intervals(ModelKind::SirMassAction, &base).unwrap().r0.unwrap();
            let b = derived_intervals(ModelKind::SirMassAction, &wide).unwrap().r0.unwrap();
            prop_assert!(b.0 <= a.0 && b.1 >= a.1);
        }
    }
}
