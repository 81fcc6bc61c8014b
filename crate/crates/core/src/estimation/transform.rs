//! Smooth bijections between ℝ and an open interval, used to run the simplex
//! unconstrained while every evaluated point stays inside the box.

use crate::models::{Bounds, ParameterDomain};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Transform {
    Identity,
    /// `(lower, ∞)`: `lower + eˣ`
    Lower(f64),
    /// `(−∞, upper)`: `upper − eˣ`
    Upper(f64),
    /// `(lower, upper)`: scaled logistic
    Logistic(f64, f64),
}

impl Transform {
    fn for_bounds(b: &Bounds) -> Self {
        match (b.lower.is_finite(), b.upper.is_finite()) {
            (false, false) => Transform::Identity,
            (true, false) => Transform::Lower(b.lower),
            (false, true) => Transform::Upper(b.upper),
            (true, true) => Transform::Logistic(b.lower, b.upper),
        }
    }

    fn to_bounded(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Lower(lo) => lo + x.exp(),
            Transform::Upper(hi) => hi - x.exp(),
            Transform::Logistic(lo, hi) => lo + (hi - lo) * logistic(x),
        }
    }

    fn to_unbounded(self, y: f64) -> f64 {
        match self {
            Transform::Identity => y,
            Transform::Lower(lo) => (y - lo).ln(),
            Transform::Upper(hi) => (hi - y).ln(),
            Transform::Logistic(lo, hi) => (y - lo).ln() - (hi - y).ln(),
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maps points of a [`ParameterDomain`] to and from unconstrained space.
#[derive(Debug, Clone)]
pub struct BoxTransform {
    parts: Vec<Transform>,
}

impl BoxTransform {
    pub fn new(domain: &ParameterDomain) -> Self {
        Self { parts: domain.bounds().iter().map(Transform::for_bounds).collect() }
    }

    pub fn to_bounded(&self, x: &[f64]) -> Vec<f64> {
        self.parts.iter().zip(x).map(|(t, v)| t.to_bounded(*v)).collect()
    }

    pub fn to_unbounded(&self, y: &[f64]) -> Vec<f64> {
        self.parts.iter().zip(y).map(|(t, v)| t.to_unbounded(*v)).collect()
    }
}
