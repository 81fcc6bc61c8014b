use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sirfit::estimation::Dataset;
use sirfit::io::{
    compare_models_command, fit_command, load_dataset, parse_params, render_table, simulate_command,
    synthetic_dataset, write_dataset_csv, RunConfig, REPORT_FILE,
};
use sirfit::models::ModelKind;
use sirfit::Result;

/// Fit SIR-family models to daily count data.
#[derive(Parser)]
#[command(name = "sirfit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sir_mass_action, sir_holling2, sir_recruitment or exponential.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of multistart points.
    #[arg(long)]
    starts: Option<usize>,
    /// RK4 grid step in days.
    #[arg(long)]
    step: Option<f64>,
    /// Units of the counts in the data file: raw or thousands.
    #[arg(long)]
    units: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            config.set("model", m)?;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(n) = self.starts {
            config.set("n_starts", &n.to_string())?;
        }
        if let Some(h) = self.step {
            config.set("grid_step", &h.to_string())?;
        }
        if let Some(u) = &self.units {
            config.set("units", u)?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem and write trajectory.csv and simulation.svg.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated parameter values in model order.
        #[arg(long, allow_hyphen_values = true)]
        params: String,
        /// Last day to simulate.
        #[arg(long, default_value_t = 14.0)]
        horizon: f64,
        /// Optional observations to overlay on the plot.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fit one model; writes report.json, table.txt, fit.svg, trajectory.csv.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Fit several models to the same data and tabulate them.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated model kinds (at least two).
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Write a synthetic `day,count` file from known parameters.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        params: String,
        #[arg(long, default_value_t = 15)]
        days: usize,
        /// Standard deviation of additive Gaussian noise, in thousands.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { common, params, horizon, data } => {
            let config = common.config()?;
            let params = parse_params(&params)?;
            let data = data.map(|p| load_dataset(&p, config.units)).transpose()?;
            let trajectory = simulate_command(&config, &params, horizon, data.as_ref(), &common.out_dir)?;
            eprintln!("wrote {} rows to {}", trajectory.times.len(), common.out_dir.display());
            Ok(0)
        }
        Command::Fit { common, data } => {
            let config = common.config()?;
            let outcome = fit_command(&config, &data, &common.out_dir)?;
            print!("{}", render_table(&outcome.bundle));
            eprintln!("report: {}", common.out_dir.join(REPORT_FILE).display());
            Ok(outcome.exit_code as u8)
        }
        Command::Compare { common, data, models } => {
            let config = common.config()?;
            let kinds = models.iter().map(|m| m.parse()).collect::<Result<Vec<ModelKind>>>()?;
            let comparison = compare_models_command(&config, &data, &kinds, &common.out_dir)?;
            print!("{}", comparison.render());
            Ok(0)
        }
        Command::Synth { common, params, days, noise, output } => {
            let config = common.config()?;
            let model = config.model_spec()?;
            let params = parse_params(&params)?;
            let data = synthetic_dataset(&model, &params, days, noise, config.seed, config.grid_step)?;
            write_synthetic(&output, &data, &config, &params, noise)?;
            Ok(0)
        }
    }
}

fn write_synthetic(path: &Path, data: &Dataset, config: &RunConfig, params: &[f64], noise: f64) -> Result<()> {
    // Files declared raw hold individual counts.
    let scale = 1.0 / config.units.to_thousands();
    let scaled = Dataset::new(
        data.times().to_vec(),
        data.observations().iter().map(|y| y * scale).collect(),
        data.label(),
    )?;
    let comments = vec![
        "SYNTHETIC data, not observations".to_string(),
        format!("model = {}, params = {params:?}", config.model),
        format!("noise sd = {noise} thousand, seed = {}, units = {}", config.seed, config.units),
    ];
    write_dataset_csv(path, &scaled, &comments)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
