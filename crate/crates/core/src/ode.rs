//! Fixed-step classical Runge-Kutta integration.
//!
//! # Step policy
//! - Marches forward from `t0` with a fixed step `h`.
//! - Each output time is hit exactly: the last step into an output time is
//!   shortened instead of interpolating, so the order-4 accuracy carries over
//!   to every reported state.
//! - Step positions are computed as `segment_start + k * h` rather than by
//!   accumulation, so the grid does not drift over long horizons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Components more negative than this trigger a positivity warning on systems
/// that declare a nonnegative state space.
pub const POSITIVITY_TOLERANCE: f64 = -1e-9;

/// Default integration step in days.
pub const DEFAULT_STEP: f64 = 1e-3;

/// A first-order system `x'(t) = g(t, x, θ)`.
pub trait OdeSystem {
    fn dimension(&self) -> usize;

    /// Writes the derivative at `(t, state)` into `out`. Must be deterministic.
    fn rhs(&self, t: f64, state: &[f64], params: &[f64], out: &mut [f64]) -> Result<()>;

    /// Whether solutions from nonnegative initial data are expected to stay
    /// nonnegative. Enables the positivity check in [`integrate`].
    fn nonnegative(&self) -> bool {
        false
    }
}

/// Adapts a closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    dimension: usize,
    rhs: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]),
{
    pub fn new(dimension: usize, rhs: F) -> Self {
        Self { dimension, rhs }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]),
{
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn rhs(&self, t: f64, state: &[f64], params: &[f64], out: &mut [f64]) -> Result<()> {
        (self.rhs)(t, state, params, out);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    tf: f64,
    step: f64,
    output_times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t0: f64, tf: f64, step: f64, output_times: Vec<f64>) -> Result<Self> {
        if !(t0.is_finite() && tf.is_finite()) {
            return Err(Error::Grid("t0 and tf must be finite".into()));
        }
        if tf < t0 {
            return Err(Error::Grid(format!("tf = {tf} precedes t0 = {t0}")));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Grid(format!("step must be finite and > 0, got {step}")));
        }
        if output_times.is_empty() {
            return Err(Error::Grid("no output times".into()));
        }
        if output_times[0] < t0 || output_times[output_times.len() - 1] > tf {
            return Err(Error::Grid(format!("output times must lie within [{t0}, {tf}]")));
        }
        if let Some(w) = output_times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::Grid(format!(
                "output times must be strictly ascending ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { t0, tf, step, output_times })
    }

    /// Grid spanning `[t0, last output]`.
    pub fn ending_at_last_output(t0: f64, step: f64, output_times: Vec<f64>) -> Result<Self> {
        let tf = output_times.last().copied().unwrap_or(t0);
        Self::new(t0, tf, step, output_times)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn output_times(&self) -> &[f64] {
        &self.output_times
    }
}

/// First state component that dipped below [`POSITIVITY_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityViolation {
    pub time: f64,
    pub component: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Set when the step was too coarse to keep a nonnegative system
    /// nonnegative. The state is never clamped.
    pub positivity_violation: Option<PositivityViolation>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Values of one state component across all times.
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[index]).collect()
    }
}

/// Stage buffers reused across steps.
struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(dimension: usize) -> Self {
        Self {
            k1: vec![0.0; dimension],
            k2: vec![0.0; dimension],
            k3: vec![0.0; dimension],
            k4: vec![0.0; dimension],
            tmp: vec![0.0; dimension],
        }
    }

    #[inline]
    fn step<S: OdeSystem + ?Sized>(
        &mut self,
        system: &S,
        t: f64,
        state: &mut [f64],
        h: f64,
        params: &[f64],
    ) -> Result<()> {
        let half = 0.5 * h;

        system.rhs(t, state, params, &mut self.k1)?;
        check_finite(&self.k1, t, "stage 1")?;

        axpy(&mut self.tmp, state, half, &self.k1);
        system.rhs(t + half, &self.tmp, params, &mut self.k2)?;
        check_finite(&self.k2, t, "stage 2")?;

        axpy(&mut self.tmp, state, half, &self.k2);
        system.rhs(t + half, &self.tmp, params, &mut self.k3)?;
        check_finite(&self.k3, t, "stage 3")?;

        axpy(&mut self.tmp, state, h, &self.k3);
        system.rhs(t + h, &self.tmp, params, &mut self.k4)?;
        check_finite(&self.k4, t, "stage 4")?;

        let sixth = h / 6.0;
        for ((((x, a), b), c), d) in state.iter_mut().zip(&self.k1).zip(&self.k2).zip(&self.k3).zip(&self.k4) {
            *x += sixth * (a + 2.0 * b + 2.0 * c + d);
        }
        check_finite(state, t, "updated state")
    }
}

/// `out = x + a * k`
#[inline]
fn axpy(out: &mut [f64], x: &[f64], a: f64, k: &[f64]) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + a * ki;
    }
}

#[inline]
fn check_finite(values: &[f64], time: f64, what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        return Ok(());
    }
    let i = values.iter().position(|v| !v.is_finite()).unwrap_or(0);
    Err(Error::Integration { time, reason: format!("non-finite {what} in component {i}") })
}

fn check_dimension<S: OdeSystem + ?Sized>(system: &S, state: &[f64]) -> Result<()> {
    if state.len() != system.dimension() {
        return Err(Error::Dimension { expected: system.dimension(), got: state.len() });
    }
    Ok(())
}

/// One classical four-stage RK4 step of size `h` from `(t, state)`.
pub fn rk4_step<S: OdeSystem + ?Sized>(
    system: &S,
    t: f64,
    state: &[f64],
    h: f64,
    params: &[f64],
) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Grid(format!("step must be finite and > 0, got {h}")));
    }
    check_dimension(system, state)?;
    let mut next = state.to_vec();
    Rk4Workspace::new(state.len()).step(system, t, &mut next, h, params)?;
    Ok(next)
}

/// Integrates from `grid.t0()` and returns the states at exactly
/// `grid.output_times()`.
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &S,
    params: &[f64],
    initial_state: &[f64],
    grid: &TimeGrid,
) -> Result<Trajectory> {
    check_dimension(system, initial_state)?;
    check_finite(initial_state, grid.t0, "initial state")?;

    let check_sign = system.nonnegative();
    let mut ws = Rk4Workspace::new(initial_state.len());
    let mut state = initial_state.to_vec();
    let mut t = grid.t0;
    let h = grid.step;
    let mut violation = None;

    let mut times = Vec::with_capacity(grid.output_times.len());
    let mut states = Vec::with_capacity(grid.output_times.len());

    for &target in &grid.output_times {
        let segment_start = t;
        // Steps landing within this distance of the target are merged into
        // the final shortened step.
        let snap = h * 1e-9;
        let mut k = 0u64;
        while t < target {
            k += 1;
            let next = segment_start + k as f64 * h;
            let (t_next, last) = if next >= target - snap { (target, true) } else { (next, false) };
            ws.step(system, t, &mut state, t_next - t, params)?;
            t = t_next;
            if check_sign && violation.is_none() && state.iter().any(|v| *v < POSITIVITY_TOLERANCE) {
                if let Some((component, &value)) =
                    state.iter().enumerate().find(|(_, v)| **v < POSITIVITY_TOLERANCE)
                {
                    violation = Some(PositivityViolation { time: t, component, value });
                }
            }
            if last {
                break;
            }
        }
        times.push(target);
        states.push(state.clone());
    }

    Ok(Trajectory { times, states, positivity_violation: violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn growth() -> FnSystem<impl Fn(f64, &[f64], &[f64], &mut [f64])> {
        FnSystem::new(1, |_, x, _, dx| dx[0] = x[0])
    }

    fn decay() -> FnSystem<impl Fn(f64, &[f64], &[f64], &mut [f64])> {
        FnSystem::new(1, |_, x, _, dx| dx[0] = -x[0])
    }

    #[test]
    fn step_matches_taylor_quartic_for_linear_growth() {
        let h: f64 = 0.1;
        let taylor = 1.0 + h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let next = rk4_step(&growth(), 0.0, &[1.0], h, &[]).unwrap();
        assert_relative_eq!(next[0], taylor, max_relative = 1e-15);
        assert_relative_eq!(next[0], 1.105_170_833_333_333_3, max_relative = 1e-15);
    }

    #[test]
    fn zero_rhs_leaves_state_unchanged() {
        let still = FnSystem::new(1, |_, _, _, dx: &mut [f64]| dx[0] = 0.0);
        for h in [1e-6, 0.1, 10.0] {
            assert_eq!(rk4_step(&still, 3.0, &[5.0], h, &[]).unwrap(), vec![5.0]);
        }
    }

    #[test]
    fn step_rejects_bad_inputs() {
        assert!(matches!(rk4_step(&decay(), 0.0, &[1.0], 0.0, &[]), Err(Error::Grid(_))));
        assert!(matches!(
            rk4_step(&decay(), 0.0, &[1.0, 2.0], 0.1, &[]),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn non_finite_stage_names_time() {
        let blowup = FnSystem::new(1, |_, x, _, dx: &mut [f64]| dx[0] = 1.0 / (x[0] - 1.0));
        match rk4_step(&blowup, 2.5, &[1.0], 0.1, &[]) {
            Err(Error::Integration { time, .. }) => assert_eq!(time, 2.5),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn linear_decay_hits_exp_minus_one() {
        let grid = TimeGrid::new(0.0, 1.0, 0.001, vec![1.0]).unwrap();
        let traj = integrate(&decay(), &[], &[1.0], &grid).unwrap();
        assert!((traj.states[0][0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn output_at_t0_returns_initial_state() {
        let grid = TimeGrid::new(2.0, 2.0, 0.5, vec![2.0]).unwrap();
        let traj = integrate(&decay(), &[], &[3.25], &grid).unwrap();
        assert_eq!(traj.times, vec![2.0]);
        assert_eq!(traj.states, vec![vec![3.25]]);
    }

    #[test]
    fn returned_times_are_requested_times_bitwise() {
        let outputs = vec![0.1, 0.33, 1.0 / 3.0 + 0.5, 2.0, 7.123_456_789];
        let grid = TimeGrid::new(0.0, 8.0, 0.07, outputs.clone()).unwrap();
        let traj = integrate(&decay(), &[], &[1.0], &grid).unwrap();
        assert_eq!(traj.times.len(), outputs.len());
        for (a, b) in traj.times.iter().zip(&outputs) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s[0] - (-t).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn order_four_convergence() {
        // x' = -x + sin t has the closed form below from x(0) = 1.
        let sys = FnSystem::new(1, |t, x, _, dx: &mut [f64]| dx[0] = -x[0] + t.sin());
        let exact = |t: f64| 1.5 * (-t).exp() + 0.5 * (t.sin() - t.cos());
        let outputs: Vec<f64> = (1..=10).map(|i| i as f64 * 0.5).collect();
        let max_err = |h: f64| {
            let grid = TimeGrid::new(0.0, 5.0, h, outputs.clone()).unwrap();
            let traj = integrate(&sys, &[], &[1.0], &grid).unwrap();
            traj.times
                .iter()
                .zip(&traj.states)
                .map(|(t, s)| (s[0] - exact(*t)).abs())
                .fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&h| max_err(h)).collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}, errors {errs:?}");
        }
    }

    #[test]
    fn integration_is_deterministic() {
        let sys = FnSystem::new(2, |t, x, p, dx: &mut [f64]| {
            dx[0] = p[0] * x[1] + t.cos();
            dx[1] = -p[1] * x[0];
        });
        let grid = TimeGrid::new(0.0, 3.0, 0.013, vec![0.5, 1.7, 3.0]).unwrap();
        let a = integrate(&sys, &[1.1, 0.7], &[0.3, -0.2], &grid).unwrap();
        let b = integrate(&sys, &[1.1, 0.7], &[0.3, -0.2], &grid).unwrap();
        let bits = |t: &Trajectory| -> Vec<u64> {
            t.states.iter().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(0.0, 1.0, 0.0, vec![1.0]).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.1, vec![]).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.1, vec![0.5, 0.5]).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.1, vec![0.5, 0.4]).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0.1, vec![1.5]).is_err());
        assert!(TimeGrid::new(1.0, 0.0, 0.1, vec![0.5]).is_err());
    }

    #[test]
    fn negative_excursion_is_flagged_not_clamped() {
        // A constant drain declared nonnegative crosses zero at t = 1.
        struct Drain;
        impl OdeSystem for Drain {
            fn dimension(&self) -> usize {
                1
            }
            fn rhs(&self, _: f64, _: &[f64], _: &[f64], out: &mut [f64]) -> Result<()> {
                out[0] = -1.0;
                Ok(())
            }
            fn nonnegative(&self) -> bool {
                true
            }
        }
        let early = TimeGrid::new(0.0, 0.5, 0.1, vec![0.5]).unwrap();
        assert!(integrate(&Drain, &[], &[1.0], &early).unwrap().positivity_violation.is_none());

        let late = TimeGrid::new(0.0, 2.0, 0.1, vec![2.0]).unwrap();
        let traj = integrate(&Drain, &[], &[1.0], &late).unwrap();
        let v = traj.positivity_violation.expect("violation expected");
        assert_eq!(v.component, 0);
        assert!(v.time > 1.0 && v.time < 1.2);
        assert!((traj.states[0][0] + 1.0).abs() < 1e-12);
    }
}
