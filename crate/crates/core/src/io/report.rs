//! The machine-readable report and its text renderings.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::dataset::Units;
use crate::estimation::FitResult;
use crate::models::ModelKind;
use crate::uncertainty::{DerivedQuantity, UncertaintyReport};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    NotConverged,
    NonIdentifiable,
    Failed,
}

impl FitStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            FitStatus::Converged => 0,
            FitStatus::NotConverged => 2,
            FitStatus::NonIdentifiable => 3,
            FitStatus::Failed => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub config_hash: String,
    pub dataset_label: String,
    /// SHA-256 of the input file bytes.
    pub dataset_sha256: String,
    pub units: Units,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub times: Vec<f64>,
    /// Thousands, after unit conversion.
    pub observations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub status: FitStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    pub provenance: Provenance,
    pub config: RunConfig,
    pub data: ObservedSeries,
    pub fit: Option<FitResult>,
    pub uncertainty: Option<UncertaintyReport>,
    /// Seconds since the Unix epoch when the report was written; the only
    /// field that differs between identical runs.
    pub generated_unix: u64,
}

impl ReportBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Four decimals in the table's usual range, scientific notation outside it.
pub fn format_value(v: f64) -> String {
    if v == 0.0 || (1e-3..1e6).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.4e}")
    }
}

fn format_interval(bounds: Option<(f64, f64)>) -> String {
    match bounds {
        Some((lo, hi)) => format!("({}, {})", format_value(lo), format_value(hi)),
        None => "n/a".into(),
    }
}

/// Parameter table with lower/estimate/upper columns, then derived
/// quantities with both interval styles.
pub fn render_table(bundle: &ReportBundle) -> String {
    let mut out = String::new();
    let model = bundle.config.model;
    let _ = writeln!(
        out,
        "{} fit to {} (n = {}, populations in thousands)",
        model,
        bundle.provenance.dataset_label,
        bundle.data.times.len()
    );
    let _ = writeln!(out, "status: {:?}", bundle.status);
    for d in &bundle.diagnostics {
        let _ = writeln!(out, "note: {d}");
    }
    let Some(fit) = &bundle.fit else {
        return out;
    };
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<10} {:>14} {:>14} {:>14}", "Parameter", "lower bound", "estimate", "upper bound");
    for (k, name) in fit.parameter_names.iter().enumerate() {
        let estimate = format_value(fit.theta_hat[k]);
        let (lo, hi) = match &bundle.uncertainty {
            Some(u) => (format_value(u.intervals[k].lower), format_value(u.intervals[k].upper)),
            None => ("n/a".into(), "n/a".into()),
        };
        let _ = writeln!(out, "{name:<10} {lo:>14} {estimate:>14} {hi:>14}");
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "objective (sum of squared residuals): {}", format_value(fit.objective));
    let Some(u) = &bundle.uncertainty else {
        return out;
    };
    let _ = writeln!(out, "sigma^2 estimate: {}", format_value(u.sigma2_hat));
    let _ = writeln!(out, "intervals: {}; covariance = {}", u.interval_label, u.covariance_formula);
    if !u.one_sided.is_empty() {
        let _ = writeln!(out, "one-sided sensitivities: {}", u.one_sided.join(", "));
    }
    let zero: Vec<&str> = u.intervals.iter().filter(|iv| iv.contains_zero).map(|iv| iv.name.as_str()).collect();
    let _ = writeln!(
        out,
        "intervals containing zero: {}",
        if zero.is_empty() { "none".to_string() } else { zero.join(", ") }
    );

    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<30} {:>10}  {:<28} {:<28}",
        "Derived quantity", "estimate", "interval arithmetic", "delta method (+/- 2 SE)"
    );
    let mut row = |label: &str, q: &Option<DerivedQuantity>| {
        if let Some(q) = q {
            let delta = Some((q.delta_method.lower, q.delta_method.upper));
            let _ = writeln!(
                out,
                "{label:<30} {:>10}  {:<28} {}",
                format_value(q.point),
                format_interval(q.interval_arithmetic),
                format_interval(delta)
            );
        }
    };
    row("R0", &u.derived.r0);
    let period_label = if model == ModelKind::Exponential {
        "1/|k| (days)"
    } else {
        "mean infectious period (days)"
    };
    row(period_label, &u.derived.infectious_period);
    if let Some(reason) = u
        .derived
        .r0
        .as_ref()
        .or(u.derived.infectious_period.as_ref())
        .and_then(|q| q.interval_arithmetic_error.as_ref())
    {
        let _ = writeln!(out, "interval arithmetic unavailable: {reason}");
    }
    out
}
