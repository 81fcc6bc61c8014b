//! Fit SIR-family information-spread models to daily count time series.
//!
//! The pipeline is: solve the forward problem with fixed-step RK4
//! ([`ode`]), minimize the ordinary-least-squares functional over an open
//! parameter box with a multistart simplex search ([`estimation`]), then
//! derive standard errors and ±2 SE intervals from finite-difference
//! sensitivities ([`uncertainty`]). [`io`] wraps this into the command-line
//! workflow.

pub mod error;
pub mod estimation;
pub mod io;
pub mod models;
pub mod ode;
pub mod uncertainty;

pub use error::{Error, Result};
