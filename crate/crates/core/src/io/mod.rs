//! File formats and the simulate / fit / compare workflows behind the CLI.

mod config;
mod dataset;
mod report;
mod svg;

pub use config::{RunConfig, KEYS};
pub use dataset::{load_dataset, parse_dataset, write_dataset_csv, write_trajectory_csv, Units};
pub use report::{format_value, render_table, FitStatus, ObservedSeries, Provenance, ReportBundle, TOOL_NAME, TOOL_VERSION};
pub use svg::{nice_ticks, Plot, Series};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimation::{multistart_fit, predict, Dataset, FitResult};
use crate::models::{ModelKind, ModelSpec, ParameterVector, EXTRA};
use crate::ode::Trajectory;
use crate::uncertainty::{quantify, ParameterInterval, UncertaintyReport};

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.txt";
pub const FIT_PLOT_FILE: &str = "fit.svg";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SIMULATION_PLOT_FILE: &str = "simulation.svg";
pub const COMPARISON_TABLE_FILE: &str = "comparison.txt";
pub const COMPARISON_JSON_FILE: &str = "comparison.json";

/// Value given to a nested model's extra parameter when warm-starting from
/// the base model's optimum. The fitting box is open at 0.
const NESTED_WARM_START: f64 = 1e-9;

/// Whole days from `origin` through `end`, plus `end` itself if it falls
/// between days.
pub fn daily_times(origin: f64, end: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut k = 0u32;
    loop {
        let t = origin + f64::from(k);
        if t > end {
            break;
        }
        times.push(t);
        k += 1;
    }
    if times.last().is_some_and(|&t| t < end) {
        times.push(end);
    }
    times
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn trajectory_series(model: &ModelSpec, trajectory: &Trajectory) -> Vec<Series> {
    model
        .state_names()
        .iter()
        .enumerate()
        .map(|(i, name)| Series {
            name: name.to_string(),
            points: trajectory.times.iter().copied().zip(trajectory.component(i)).collect(),
        })
        .collect()
}

/// Finely sampled curve for plotting (20 points per day).
fn plot_trajectory(model: &ModelSpec, params: &[f64], origin: f64, end: f64, step: f64) -> Result<Trajectory> {
    let n = (((end - origin) * 20.0).ceil() as usize).max(1);
    let times: Vec<f64> = (0..=n).map(|k| origin + (end - origin) * k as f64 / n as f64).collect();
    model.solve(params, origin, &times, step)
}

/// Forward solve from day 0 to `horizon`; writes `trajectory.csv` at daily
/// resolution and an SVG of every state (with `data` as scatter if given).
/// Boundary values such as `β = 0` are allowed here, unlike in fitting.
pub fn simulate_command(
    config: &RunConfig,
    params: &[f64],
    horizon: f64,
    data: Option<&Dataset>,
    out_dir: &Path,
) -> Result<Trajectory> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Precondition(format!("horizon must be >= 0, got {horizon}")));
    }
    let model = config.model_spec()?;
    model.check_layout(params)?;
    model.domain().check_closed(params, &model.parameter_names())?;
    fs::create_dir_all(out_dir)?;

    let trajectory = model.solve(params, 0.0, &daily_times(0.0, horizon), config.grid_step)?;
    write_trajectory_csv(&out_dir.join(TRAJECTORY_FILE), &trajectory, model.state_names())?;

    let curve = plot_trajectory(&model, params, 0.0, horizon.max(1e-9), config.grid_step)?;
    let plot = Plot {
        title: format!("{} simulation", model.kind()),
        x_label: "day".into(),
        y_label: "thousands".into(),
        lines: trajectory_series(&model, &curve),
        scatter: data.map(|d| Series {
            name: "data".into(),
            points: d.times().iter().copied().zip(d.observations().iter().copied()).collect(),
        }),
        t0: config.t0,
    };
    fs::write(out_dir.join(SIMULATION_PLOT_FILE), plot.render())?;
    Ok(trajectory)
}

pub struct FitOutcome {
    pub bundle: ReportBundle,
    pub exit_code: i32,
}

fn fit_and_quantify(config: &RunConfig, model: &ModelSpec, dataset: &Dataset, extra_starts: Vec<ParameterVector>) -> (FitStatus, Vec<String>, Option<FitResult>, Option<UncertaintyReport>) {
    let mut options = config.fit_options();
    options.extra_starts = extra_starts;
    let fit = match multistart_fit(model, dataset, &options) {
        Ok(f) => f,
        Err(e) => return (FitStatus::Failed, vec![e.to_string()], None, None),
    };
    let mut diagnostics = Vec::new();
    if fit.failed_starts > 0 {
        diagnostics.push(format!("{} of {} starts failed to integrate", fit.failed_starts, fit.n_starts));
    }
    if let Some(v) = &fit.positivity_violation {
        diagnostics.push(format!("fitted trajectory went negative: {v:?}"));
    }
    match quantify(model, dataset, &fit, config.rel_step, config.grid_step) {
        Ok(u) => {
            let status = if fit.converged { FitStatus::Converged } else { FitStatus::NotConverged };
            if !fit.converged {
                diagnostics.push("optimizer hit max_evals before converging".into());
            }
            (status, diagnostics, Some(fit), Some(u))
        }
        Err(e) => {
            let status = match e {
                Error::NonIdentifiable { .. } => FitStatus::NonIdentifiable,
                _ => FitStatus::Failed,
            };
            diagnostics.push(e.to_string());
            (status, diagnostics, Some(fit), None)
        }
    }
}

/// Fits, quantifies uncertainty and writes `report.json`, `table.txt`,
/// `fit.svg` and `trajectory.csv` to `out_dir`.
///
/// Unreadable input and `n ≤ p` are errors; a failed or non-identifiable
/// fit still writes the report and is signalled by a nonzero exit code.
pub fn fit_command(config: &RunConfig, data_path: &Path, out_dir: &Path) -> Result<FitOutcome> {
    let model = config.model_spec()?;
    let bytes = fs::read(data_path)?;
    let dataset = load_dataset(data_path, config.units)?;
    dataset.check_size(model.parameter_count())?;
    fs::create_dir_all(out_dir)?;

    let (status, diagnostics, fit, uncertainty) = fit_and_quantify(config, &model, &dataset, Vec::new());
    let bundle = ReportBundle {
        status,
        diagnostics,
        provenance: Provenance {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            config_hash: config.canonical_hash(),
            dataset_label: dataset.label().into(),
            dataset_sha256: sha256_hex(&bytes),
            units: config.units,
        },
        config: config.clone(),
        data: ObservedSeries { times: dataset.times().to_vec(), observations: dataset.observations().to_vec() },
        fit,
        uncertainty,
        generated_unix: unix_now(),
    };

    fs::write(out_dir.join(REPORT_FILE), bundle.to_json())?;
    fs::write(out_dir.join(TABLE_FILE), render_table(&bundle))?;
    if let Some(fit) = &bundle.fit {
        let last = *dataset.times().last().expect("nonempty");
        let origin = dataset.origin();
        let daily = model.solve(&fit.theta_hat, origin, &daily_times(origin, last), config.grid_step)?;
        write_trajectory_csv(&out_dir.join(TRAJECTORY_FILE), &daily, model.state_names())?;
        let curve = plot_trajectory(&model, &fit.theta_hat, origin, last.max(origin + 1e-9), config.grid_step)?;
        let plot = Plot {
            title: format!("{} fit to {}", model.kind(), dataset.label()),
            x_label: "day".into(),
            y_label: "thousands".into(),
            lines: trajectory_series(&model, &curve),
            scatter: Some(Series {
                name: "data".into(),
                points: dataset.times().iter().copied().zip(dataset.observations().iter().copied()).collect(),
            }),
            t0: config.t0,
        };
        fs::write(out_dir.join(FIT_PLOT_FILE), plot.render())?;
    }
    let exit_code = bundle.status.exit_code();
    Ok(FitOutcome { bundle, exit_code })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub model: ModelKind,
    pub parameter_count: usize,
    pub objective: Option<f64>,
    pub theta_hat: Option<ParameterVector>,
    pub intervals: Option<Vec<ParameterInterval>>,
    /// Parameters whose ±2 SE interval contains zero.
    pub zero_containing: Vec<String>,
    pub status: FitStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dataset_label: String,
    pub entries: Vec<ComparisonEntry>,
}

impl Comparison {
    pub fn entry(&self, kind: ModelKind) -> Option<&ComparisonEntry> {
        self.entries.iter().find(|e| e.model == kind)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model comparison on {}", self.dataset_label);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<16} {:>3} {:>16}  {:<16} {}", "model", "p", "objective", "status", "intervals containing zero");
        for e in &self.entries {
            let objective = e.objective.map_or("n/a".into(), format_value);
            let zero = if e.intervals.is_none() {
                "n/a".to_string()
            } else if e.zero_containing.is_empty() {
                "none".to_string()
            } else {
                e.zero_containing.join(", ")
            };
            let _ = writeln!(out, "{:<16} {:>3} {:>16}  {:<16} {}", e.model.name(), e.parameter_count, objective, format!("{:?}", e.status), zero);
        }
        for e in &self.entries {
            let _ = writeln!(out);
            let _ = writeln!(out, "{}", e.model);
            for d in &e.diagnostics {
                let _ = writeln!(out, "  note: {d}");
            }
            match (&e.theta_hat, &e.intervals) {
                (_, Some(intervals)) => {
                    for iv in intervals {
                        let _ = writeln!(
                            out,
                            "  {:<8} {:>14} {:>14} {:>14}",
                            iv.name,
                            format_value(iv.lower),
                            format_value(iv.estimate),
                            format_value(iv.upper)
                        );
                    }
                }
                (Some(theta), None) => {
                    for (name, v) in e.model.parameter_names().iter().zip(theta.iter()) {
                        let _ = writeln!(out, "  {name:<8} {:>14} {:>14} {:>14}", "n/a", format_value(*v), "n/a");
                    }
                }
                (None, None) => {}
            }
        }
        out
    }
}

/// Fits each kind to the same data and tabulates objectives and intervals.
///
/// Nested SIR variants are warm-started from the mass-action optimum (with
/// the extra parameter near zero) so that their objective cannot end up
/// worse than the base model's through an unlucky search.
pub fn compare_models_command(config: &RunConfig, data_path: &Path, kinds: &[ModelKind], out_dir: &Path) -> Result<Comparison> {
    if kinds.len() < 2 {
        return Err(Error::Precondition(format!("model comparison needs at least 2 kinds, got {}", kinds.len())));
    }
    if let Some(k) = kinds.iter().enumerate().find_map(|(i, k)| kinds[..i].contains(k).then_some(k)) {
        return Err(Error::Precondition(format!("{k} listed twice")));
    }
    let dataset = load_dataset(data_path, config.units)?;
    fs::create_dir_all(out_dir)?;

    // Base model first so nested kinds can start from its optimum.
    let mut order: Vec<ModelKind> = kinds.to_vec();
    order.sort_by_key(|k| *k != ModelKind::SirMassAction);
    let mut base: Option<ParameterVector> = None;
    let mut entries = Vec::new();
    for kind in order {
        let model = match config.model_spec_for(kind) {
            Ok(m) => m,
            Err(e) => {
                entries.push(failed_entry(kind, e));
                continue;
            }
        };
        if let Err(e) = dataset.check_size(model.parameter_count()) {
            entries.push(failed_entry(kind, e));
            continue;
        }
        let warm: Vec<ParameterVector> = match (&base, kind) {
            (Some(b), ModelKind::SirHolling2 | ModelKind::SirRecruitment) => {
                let mut p = b.to_vec();
                p.insert(EXTRA, NESTED_WARM_START);
                vec![ParameterVector::new(p)]
            }
            _ => Vec::new(),
        };
        let (status, diagnostics, fit, uncertainty) = fit_and_quantify(config, &model, &dataset, warm);
        if kind == ModelKind::SirMassAction {
            base = fit.as_ref().map(|f| f.theta_hat.clone());
        }
        let intervals = uncertainty.map(|u| u.intervals);
        entries.push(ComparisonEntry {
            model: kind,
            parameter_count: kind.parameter_count(),
            objective: fit.as_ref().map(|f| f.objective),
            theta_hat: fit.map(|f| f.theta_hat),
            zero_containing: intervals
                .iter()
                .flatten()
                .filter(|iv| iv.contains_zero)
                .map(|iv| iv.name.clone())
                .collect(),
            intervals,
            status,
            diagnostics,
        });
    }
    entries.sort_by_key(|e| kinds.iter().position(|k| *k == e.model));

    let comparison = Comparison { dataset_label: dataset.label().into(), entries };
    fs::write(out_dir.join(COMPARISON_TABLE_FILE), comparison.render())?;
    let mut json = serde_json::to_string_pretty(&comparison)?;
    json.push('\n');
    fs::write(out_dir.join(COMPARISON_JSON_FILE), json)?;
    Ok(comparison)
}

fn failed_entry(kind: ModelKind, e: Error) -> ComparisonEntry {
    ComparisonEntry {
        model: kind,
        parameter_count: kind.parameter_count(),
        objective: None,
        theta_hat: None,
        intervals: None,
        zero_containing: Vec::new(),
        status: FitStatus::Failed,
        diagnostics: vec![e.to_string()],
    }
}

/// Model output at days `0..days` with additive Gaussian noise of standard
/// deviation `noise_sd` (thousands), clamped at zero.
pub fn synthetic_dataset(
    model: &ModelSpec,
    params: &[f64],
    days: usize,
    noise_sd: f64,
    seed: u64,
    grid_step: f64,
) -> Result<Dataset> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Precondition(format!("noise standard deviation must be >= 0, got {noise_sd}")));
    }
    if days == 0 {
        return Err(Error::Precondition("at least one day is required".into()));
    }
    model.check_layout(params)?;
    model.check_domain(params)?;
    let times: Vec<f64> = (0..days).map(|d| d as f64).collect();
    let clean = predict(model, params, 0.0, &times, grid_step)?;
    let observations = if noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_sd).expect("finite sd");
        clean.iter().map(|y| (y + noise.sample(&mut rng)).max(0.0)).collect()
    } else {
        clean
    };
    Dataset::new(times, observations, "synthetic")
}

/// Parses `a,b,c` into numbers.
pub fn parse_params(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("invalid parameter value {s:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn daily_grid() {
        assert_eq!(daily_times(0.0, 0.0), vec![0.0]);
        assert_eq!(daily_times(0.0, 3.0), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(daily_times(1.0, 2.5), vec![1.0, 2.0, 2.5]);
    }

    #[test]
    fn params_parse() {
        assert_eq!(parse_params("0.0153, 0.3643,156.612,2.2726").unwrap(), vec![0.0153, 0.3643, 156.612, 2.2726]);
        assert!(parse_params("1,,2").is_err());
        assert!(parse_params("1,inf").is_err());
    }

    #[test]
    fn synthetic_noise_is_seeded() {
        let model = ModelSpec::new(ModelKind::SirMassAction);
        let p = [0.0153, 0.3643, 156.612, 2.2726];
        let a = synthetic_dataset(&model, &p, 15, 1.0, 5, 0.01).unwrap();
        let b = synthetic_dataset(&model, &p, 15, 1.0, 5, 0.01).unwrap();
        let c = synthetic_dataset(&model, &p, 15, 1.0, 6, 0.01).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let clean = synthetic_dataset(&model, &p, 15, 0.0, 5, 0.01).unwrap();
        assert_eq!(clean.observations()[0], 2.2726);
        assert!(a.observations().iter().all(|y| *y >= 0.0));
    }
}
