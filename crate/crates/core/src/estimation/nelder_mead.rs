//! Derivative-free simplex minimization over an open parameter box.
//!
//! The simplex lives in unconstrained coordinates (see [`BoxTransform`]);
//! every objective call receives a point strictly inside the box. Points that
//! round onto a boundary are scored with [`SENTINEL`] without calling the
//! objective.
//!
//! Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
//! After convergence the simplex is rebuilt around the best vertex and the
//! search continues; it stops once a rebuilt simplex fails to improve on the
//! best value by more than `function_tol`.

use serde::{Deserialize, Serialize};

use super::transform::BoxTransform;
use crate::error::{Error, Result};
use crate::models::{ParameterDomain, ParameterVector};

/// Score for points where the forward model could not be evaluated.
pub const SENTINEL: f64 = 1e30;

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;
const MAX_REBUILDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute spread of objective values across the simplex.
    pub function_tol: f64,
    /// Simplex diameter (max-norm, transformed space).
    pub param_tol: f64,
    pub max_evals: usize,
    /// Minima from different starts closer than this (max-norm,
    /// transformed space) are reported once.
    pub dedup_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { function_tol: 1e-10, param_tol: 1e-8, max_evals: 100_000, dedup_tol: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub params: ParameterVector,
    pub value: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Best value seen after each iteration.
    pub best_history: Vec<f64>,
}

#[derive(Clone)]
struct Vertex {
    x: Vec<f64>,
    y: Vec<f64>,
    f: f64,
}

struct Search<'a, F> {
    objective: F,
    transform: BoxTransform,
    domain: &'a ParameterDomain,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Search<'_, F> {
    fn vertex(&mut self, x: Vec<f64>) -> Vertex {
        let y = self.transform.to_bounded(&x);
        let f = self.score(&y);
        Vertex { x, y, f }
    }

    fn score(&mut self, y: &[f64]) -> f64 {
        self.evaluations += 1;
        if !self.domain.contains(y) {
            return SENTINEL;
        }
        let f = (self.objective)(y);
        if f.is_nan() {
            SENTINEL
        } else {
            f
        }
    }
}

fn max_norm_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn sort(simplex: &mut [Vertex]) {
    simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
}

/// Minimizes `objective` from `start`, which must lie inside `domain`.
/// Exhausting `max_evals` returns the best point found with
/// `converged = false`.
pub fn nelder_mead_minimize<F>(
    objective: F,
    start: &[f64],
    domain: &ParameterDomain,
    tol: &Tolerances,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    if start.is_empty() {
        return Err(Error::Precondition("empty start point".into()));
    }
    if !domain.contains(start) {
        return Err(Error::Domain(format!("start point {start:?} is outside the domain")));
    }

    let mut search = Search { objective, transform: BoxTransform::new(domain), domain, evaluations: 0 };
    let x0 = search.transform.to_unbounded(start);
    let f0 = search.score(start);
    let mut best = Vertex { x: x0, y: start.to_vec(), f: f0 };
    let mut history = Vec::new();
    let mut converged = false;

    for rebuild in 0..=MAX_REBUILDS {
        let (vertex, done) = run_simplex(&mut search, best.clone(), tol, &mut history);
        let improved = vertex.f < best.f - tol.function_tol;
        if vertex.f < best.f {
            best = vertex;
        }
        if !done {
            break;
        }
        if rebuild > 0 && !improved {
            converged = true;
            break;
        }
        if rebuild == MAX_REBUILDS {
            converged = true;
        }
    }

    Ok(Minimum {
        params: ParameterVector::new(best.y),
        value: best.f,
        converged,
        evaluations: search.evaluations,
        best_history: history,
    })
}

/// One simplex run from `origin`. Returns the best vertex and whether a
/// convergence test fired (as opposed to running out of evaluations).
fn run_simplex<F: FnMut(&[f64]) -> f64>(
    search: &mut Search<'_, F>,
    origin: Vertex,
    tol: &Tolerances,
    history: &mut Vec<f64>,
) -> (Vertex, bool) {
    let n = origin.x.len();
    let mut simplex = Vec::with_capacity(n + 1);
    for i in 0..n {
        if search.evaluations >= tol.max_evals {
            return (origin, false);
        }
        let mut x = origin.x.clone();
        x[i] += 0.1 * x[i].abs().max(1.0);
        simplex.push(search.vertex(x));
    }
    simplex.insert(0, origin);
    sort(&mut simplex);

    loop {
        history.push(simplex[0].f);

        let spread = simplex[n].f - simplex[0].f;
        let diameter = simplex[1..]
            .iter()
            .map(|v| max_norm_distance(&v.x, &simplex[0].x))
            .fold(0.0, f64::max);
        if spread <= tol.function_tol || diameter <= tol.param_tol {
            return (simplex.swap_remove(0), true);
        }
        if search.evaluations >= tol.max_evals {
            return (simplex.swap_remove(0), false);
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(&v.x) {
                *c += xi / n as f64;
            }
        }
        let along = |coef: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, w)| c + coef * (c - w)).collect()
        };

        let worst_x = simplex[n].x.clone();
        let reflected = search.vertex(along(REFLECTION, &worst_x));

        if reflected.f < simplex[0].f {
            let expanded = search.vertex(along(EXPANSION, &worst_x));
            simplex[n] = if expanded.f < reflected.f { expanded } else { reflected };
        } else if reflected.f < simplex[n - 1].f {
            simplex[n] = reflected;
        } else {
            let outside = reflected.f < simplex[n].f;
            let contracted = if outside {
                search.vertex(along(CONTRACTION * REFLECTION, &worst_x))
            } else {
                search.vertex(along(-CONTRACTION, &worst_x))
            };
            let accept = if outside { contracted.f <= reflected.f } else { contracted.f < simplex[n].f };
            if accept {
                simplex[n] = contracted;
            } else {
                let best_x = simplex[0].x.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best_x.iter().zip(&v.x).map(|(b, xi)| b + SHRINK * (xi - b)).collect();
                    *v = search.vertex(x);
                }
            }
        }
        sort(&mut simplex);
    }
}
