//! The model family: mass-action SIR, Holling type-II SIR, SIR with
//! recruitment of susceptibles, and a closed-form exponential.
//!
//! Populations are in thousands, time in days. Parameter layouts:
//!
//! | kind              | layout                  |
//! |-------------------|-------------------------|
//! | `sir_mass_action` | β, γ, S₀, I₀            |
//! | `sir_holling2`    | β, γ, S₀, I₀, h         |
//! | `sir_recruitment` | β, γ, S₀, I₀, Γ         |
//! | `exponential`     | I₀, k                   |

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, OdeSystem, TimeGrid, Trajectory};

/// 3.02 × 10⁸ monthly users expressed in thousands.
pub const DEFAULT_POPULATION_CAP: f64 = 3.02e5;

/// Lower bound for the handling time while exploring uncertainty around a
/// fit. Never used during fitting.
pub const DEFAULT_HANDLING_TIME_EXPLORATION_LOWER: f64 = -1e-3;

const HOLLING_SINGULARITY: f64 = 1e-12;

pub const BETA: usize = 0;
pub const GAMMA: usize = 1;
pub const S0: usize = 2;
pub const I0: usize = 3;
/// Slot of `h` (Holling) or `Γ` (recruitment).
pub const EXTRA: usize = 4;

pub const EXP_I0: usize = 0;
pub const EXP_RATE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SirMassAction,
    SirHolling2,
    SirRecruitment,
    Exponential,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::SirMassAction,
        ModelKind::SirHolling2,
        ModelKind::SirRecruitment,
        ModelKind::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SirMassAction => "sir_mass_action",
            ModelKind::SirHolling2 => "sir_holling2",
            ModelKind::SirRecruitment => "sir_recruitment",
            ModelKind::Exponential => "exponential",
        }
    }

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::SirMassAction => &["beta", "gamma", "S0", "I0"],
            ModelKind::SirHolling2 => &["beta", "gamma", "S0", "I0", "h"],
            ModelKind::SirRecruitment => &["beta", "gamma", "S0", "I0", "Gamma"],
            ModelKind::Exponential => &["I0", "k"],
        }
    }

    pub fn parameter_count(self) -> usize {
        self.parameter_names().len()
    }

    pub fn is_sir(self) -> bool {
        !matches!(self, ModelKind::Exponential)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "sir_mass_action" | "sir" | "mass_action" => Ok(ModelKind::SirMassAction),
            "sir_holling2" | "holling2" | "holling" => Ok(ModelKind::SirHolling2),
            "sir_recruitment" | "recruitment" => Ok(ModelKind::SirRecruitment),
            "exponential" | "exp" => Ok(ModelKind::Exponential),
            _ => Err(Error::Config(format!(
                "unknown model kind {s:?}; expected one of sir_mass_action, sir_holling2, \
                 sir_recruitment, exponential"
            ))),
        }
    }
}

/// Ordered parameter values for one model layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn with(&self, index: usize, value: f64) -> Self {
        let mut v = self.0.clone();
        v[index] = value;
        Self(v)
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl From<&[f64]> for ParameterVector {
    fn from(values: &[f64]) -> Self {
        Self(values.to_vec())
    }
}

/// Open interval `(lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub const fn positive() -> Self {
        Self::new(0.0, f64::INFINITY)
    }

    pub const fn unbounded() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    /// Membership in `[lower, upper]`.
    pub fn closure_contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Per-parameter open box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    bounds: Vec<Bounds>,
}

impl ParameterDomain {
    pub fn new(bounds: Vec<Bounds>) -> Self {
        Self { bounds }
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn contains(&self, params: &[f64]) -> bool {
        params.len() == self.bounds.len()
            && params.iter().zip(&self.bounds).all(|(x, b)| b.contains(*x))
    }

    pub fn check(&self, params: &[f64], names: &[&str]) -> Result<()> {
        self.check_with(params, names, Bounds::contains, ('(', ')'))
    }

    /// Like [`Self::check`] but admits boundary values.
    pub fn check_closed(&self, params: &[f64], names: &[&str]) -> Result<()> {
        self.check_with(params, names, Bounds::closure_contains, ('[', ']'))
    }

    fn check_with(&self, params: &[f64], names: &[&str], inside: fn(&Bounds, f64) -> bool, brackets: (char, char)) -> Result<()> {
        if params.len() != self.bounds.len() {
            return Err(Error::Dimension { expected: self.bounds.len(), got: params.len() });
        }
        for (i, (x, b)) in params.iter().zip(&self.bounds).enumerate() {
            if !inside(b, *x) {
                let name = names.get(i).copied().unwrap_or("?");
                return Err(Error::Domain(format!(
                    "{name} = {x} outside the admissible interval {}{}, {}{}",
                    brackets.0, b.lower, b.upper, brackets.1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    kind: ModelKind,
    parameter_names: Vec<String>,
    domain: ParameterDomain,
    population_cap: f64,
    handling_time_lower: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self::with_population_cap(kind, DEFAULT_POPULATION_CAP)
    }

    pub fn with_population_cap(kind: ModelKind, population_cap: f64) -> Self {
        let pop = Bounds::new(0.0, population_cap);
        let bounds = match kind {
            ModelKind::SirMassAction => vec![Bounds::positive(), Bounds::positive(), pop, pop],
            ModelKind::SirHolling2 | ModelKind::SirRecruitment => {
                vec![Bounds::positive(), Bounds::positive(), pop, pop, Bounds::positive()]
            }
            // k carries its own sign: growth or decay.
            ModelKind::Exponential => vec![pop, Bounds::unbounded()],
        };
        Self {
            kind,
            parameter_names: kind.parameter_names().iter().map(|s| s.to_string()).collect(),
            domain: ParameterDomain::new(bounds),
            population_cap,
            handling_time_lower: DEFAULT_HANDLING_TIME_EXPLORATION_LOWER,
        }
    }

    /// Sets the (negative) lower bound for `h` used by
    /// [`ModelSpec::exploration_domain`].
    pub fn with_handling_time_exploration_lower(mut self, lower: f64) -> Self {
        self.handling_time_lower = lower;
        self
    }

    /// Replaces the fitting bounds of the named parameter.
    pub fn with_bounds(mut self, name: &str, bounds: Bounds) -> Result<Self> {
        let index = self.parameter_names.iter().position(|n| n == name).ok_or_else(|| {
            Error::Config(format!("{} has no parameter {name:?}; parameters are {:?}", self.kind, self.parameter_names))
        })?;
        if !(bounds.lower < bounds.upper) || bounds.lower.is_nan() || bounds.upper.is_nan() {
            return Err(Error::Config(format!("bounds for {name} must satisfy lower < upper, got ({}, {})", bounds.lower, bounds.upper)));
        }
        let mut all = self.domain.bounds().to_vec();
        all[index] = bounds;
        self.domain = ParameterDomain::new(all);
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn parameter_names(&self) -> Vec<&str> {
        self.parameter_names.iter().map(String::as_str).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_names.len()
    }

    /// Box used for fitting.
    pub fn domain(&self) -> &ParameterDomain {
        &self.domain
    }

    pub fn population_cap(&self) -> f64 {
        self.population_cap
    }

    /// Box used when perturbing around a fit. Identical to [`Self::domain`]
    /// except that the Holling handling time may go negative.
    pub fn exploration_domain(&self) -> ParameterDomain {
        let mut bounds = self.domain.bounds().to_vec();
        if self.kind == ModelKind::SirHolling2 {
            bounds[EXTRA].lower = self.handling_time_lower.min(0.0);
        }
        ParameterDomain::new(bounds)
    }

    pub fn check_layout(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Dimension { expected: self.parameter_count(), got: params.len() });
        }
        Ok(())
    }

    pub fn check_domain(&self, params: &[f64]) -> Result<()> {
        self.domain.check(params, &self.parameter_names())
    }

    /// Solves the forward problem from `origin` (where the initial conditions
    /// apply) and returns the state at each of `times`. The exponential model
    /// has the one-dimensional state `[I]`; SIR models return `[S, I]`.
    pub fn solve(&self, params: &[f64], origin: f64, times: &[f64], step: f64) -> Result<Trajectory> {
        self.check_layout(params)?;
        match self.kind {
            ModelKind::Exponential => {
                if let Some(t) = times.iter().find(|t| **t < origin) {
                    return Err(Error::Grid(format!("time {t} precedes origin {origin}")));
                }
                Ok(Trajectory {
                    times: times.to_vec(),
                    states: times.iter().map(|t| vec![exponential_model(t - origin, params)]).collect(),
                    positivity_violation: None,
                })
            }
            kind => {
                let grid = TimeGrid::ending_at_last_output(origin, step, times.to_vec())?;
                integrate(&SirSystem::new(kind), params, &[params[S0], params[I0]], &grid)
            }
        }
    }

    /// Index of the infectious compartment within a [`Self::solve`] state.
    pub fn infectious_index(&self) -> usize {
        if self.kind.is_sir() {
            1
        } else {
            0
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        if self.kind.is_sir() {
            &["S", "I"]
        } else {
            &["I"]
        }
    }
}

/// The SIR family as an [`OdeSystem`] over `[S, I]`.
#[derive(Debug, Clone, Copy)]
pub struct SirSystem {
    kind: ModelKind,
}

impl SirSystem {
    /// Panics on [`ModelKind::Exponential`], which has no ODE form.
    pub fn new(kind: ModelKind) -> Self {
        assert!(kind.is_sir(), "{kind} is not an SIR model");
        Self { kind }
    }
}

impl OdeSystem for SirSystem {
    fn dimension(&self) -> usize {
        2
    }

    #[inline]
    fn rhs(&self, _t: f64, state: &[f64], params: &[f64], out: &mut [f64]) -> Result<()> {
        let x = [state[0], state[1]];
        let d = match self.kind {
            ModelKind::SirMassAction => sir_mass_action_rhs(x, params),
            ModelKind::SirHolling2 => sir_holling2_rhs(x, params)?,
            ModelKind::SirRecruitment => sir_recruitment_rhs(x, params),
            ModelKind::Exponential => unreachable!(),
        };
        out[0] = d[0];
        out[1] = d[1];
        Ok(())
    }

    fn nonnegative(&self) -> bool {
        true
    }
}

/// `[−βSI, βSI − γI]`.
#[inline]
pub fn sir_mass_action_rhs([s, i]: [f64; 2], params: &[f64]) -> [f64; 2] {
    let incidence = params[BETA] * s * i;
    [-incidence, incidence - params[GAMMA] * i]
}

/// `[−H, H − γI]` with the saturating incidence `H = βSI / (1 + hS)`.
#[inline]
pub fn sir_holling2_rhs([s, i]: [f64; 2], params: &[f64]) -> Result<[f64; 2]> {
    let denominator = 1.0 + params[EXTRA] * s;
    if denominator.abs() < HOLLING_SINGULARITY {
        return Err(Error::Singularity { denominator, susceptible: s });
    }
    let incidence = params[BETA] * s * i / denominator;
    Ok([-incidence, incidence - params[GAMMA] * i])
}

/// `[Γ − βSI, βSI − γI]`.
#[inline]
pub fn sir_recruitment_rhs([s, i]: [f64; 2], params: &[f64]) -> [f64; 2] {
    let incidence = params[BETA] * s * i;
    [params[EXTRA] - incidence, incidence - params[GAMMA] * i]
}

/// `I₀ e^{kt}`.
pub fn exponential_model(t: f64, params: &[f64]) -> f64 {
    params[EXP_I0] * (params[EXP_RATE] * t).exp()
}

fn recovery_rate(params: &[f64]) -> Result<f64> {
    let gamma = params[GAMMA];
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("recovery rate must be positive, got {gamma}")));
    }
    Ok(gamma)
}

/// Per-capita transmission at the disease-free state `S = S₀`: `βS₀` for
/// mass action and recruitment, `βS₀/(1 + hS₀)` for Holling type II.
fn initial_transmission(kind: ModelKind, params: &[f64]) -> Result<f64> {
    match kind {
        ModelKind::SirMassAction | ModelKind::SirRecruitment => Ok(params[BETA] * params[S0]),
        ModelKind::SirHolling2 => {
            let denominator = 1.0 + params[EXTRA] * params[S0];
            if denominator.abs() < HOLLING_SINGULARITY {
                return Err(Error::Singularity { denominator, susceptible: params[S0] });
            }
            Ok(params[BETA] * params[S0] / denominator)
        }
        ModelKind::Exponential => {
            Err(Error::Domain("the exponential model has no reproduction number".into()))
        }
    }
}

/// `R₀ = βS₀/γ` (with the Holling saturation factor for `sir_holling2`).
pub fn basic_reproduction_number(kind: ModelKind, params: &[f64]) -> Result<f64> {
    let gamma = recovery_rate(params)?;
    Ok(initial_transmission(kind, params)? / gamma)
}

/// Mean time spent in the infectious class: `1/γ` for SIR models, `1/|k|`
/// for the exponential model.
pub fn mean_infectious_period(kind: ModelKind, params: &[f64]) -> Result<f64> {
    if kind.is_sir() {
        return Ok(1.0 / recovery_rate(params)?);
    }
    let k = params[EXP_RATE];
    if k == 0.0 {
        return Err(Error::Domain("k = 0 gives an unbounded infectious period".into()));
    }
    Ok(1.0 / k.abs())
}

/// Early growth rate `k = βS₀ − γ` of the linearization about `S ≈ S₀`.
pub fn linearized_growth_rate(kind: ModelKind, params: &[f64]) -> Result<f64> {
    Ok(initial_transmission(kind, params)? - params[GAMMA])
}

/// `I₀ e^{(βS₀ − γ)t}`, the small-`t` approximation of the SIR infectious
/// curve.
pub fn linearized_infectious(kind: ModelKind, t: f64, params: &[f64]) -> Result<f64> {
    let k = linearized_growth_rate(kind, params)?;
    Ok(params[I0] * (k * t).exp())
}
