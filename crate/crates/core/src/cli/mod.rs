//! Command-line front end.
//!
//! Five subcommands share the global flags `--config`, `--set`, `--out`,
//! `--threads` and `--seed`. Single-result commands print JSON; sweeps and
//! validation reports are CSV.

pub mod config;
pub mod sweep;
pub mod validate;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analytic::{AnalyticError, AnalyticModel};
use crate::montecarlo::Simulator;
use crate::optimizer::{optimal_beta, optimal_mu, BetaMethod, Metric, OptimizeError};
use config::{load, LoadError, LoadedConfig};
use sweep::{parse_range, parse_values, run_sweep, write_csv, Engine, Output, SweepSpec, SweepVariable};
use validate::{run_validation, write_checks, ValidationError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

pub const THREADS_ENV: &str = "RIS_STOGEO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ris-stogeo", version, about = "Coverage, ASE and EE of RIS-aided mmWave cellular networks")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration field (`key=value`, nested keys with dots).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output path, `-` for stdout.
    #[arg(long, default_value = "-", global = true)]
    pub out: String,
    /// Worker threads (falls back to RIS_STOGEO_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed for Monte Carlo runs.
    #[arg(long, default_value_t = 1, global = true)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic coverage, ASE, EE and association probabilities.
    Analytic,
    /// Monte Carlo estimates of the same metrics.
    Mc {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Sweep one variable and emit a CSV table.
    Sweep(SweepArgs),
    /// Optimal training fraction β* or RIS fraction μ*.
    Optimize(OptimizeArgs),
    /// Cross-check analytic results against Monte Carlo oracles.
    Validate {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub variable: SweepVariable,
    /// `start:stop:count[:linear|log]`.
    #[arg(long, conflicts_with = "values", required_unless_present = "values")]
    pub range: Option<String>,
    /// Comma-separated values.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "coverage,ase,ee,assoc")]
    pub outputs: Vec<Output>,
    #[arg(long, value_enum, default_value = "analytic")]
    pub engine: Engine,
    #[arg(long, default_value_t = 20_000)]
    pub mc_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Beta,
    Mu,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    /// Objective for μ; β always maximises the alignment objective.
    #[arg(long, value_enum, default_value = "ase")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "root")]
    pub method: MethodArg,
    /// Number of μ grid points.
    #[arg(long, default_value_t = 21)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Coverage,
    Ase,
    Ee,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Coverage => Metric::Coverage,
            MetricArg::Ase => Metric::Ase,
            MetricArg::Ee => Metric::Ee,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Root,
    Scan,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        match e {
            ValidationError::Analytic(a) => Self::Analytic(a),
            ValidationError::Optimize(o) => Self::Optimize(o),
            ValidationError::Config(c) => Self::Load(LoadError::Invalid(c)),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Load(LoadError::Io { .. }) => EXIT_OTHER,
            Self::Load(_) | Self::Usage(_) => EXIT_CONFIG,
            Self::Analytic(AnalyticError::Config(_)) | Self::Analytic(AnalyticError::Spec(_)) => EXIT_CONFIG,
            Self::Analytic(AnalyticError::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
            Self::Optimize(OptimizeError::Config(_)) | Self::Optimize(OptimizeError::Resolution(_)) => EXIT_CONFIG,
            Self::Optimize(OptimizeError::Analytic(a)) => Self::Analytic(a.clone()).exit_code(),
            Self::ValidationFailed(_) => EXIT_VALIDATION,
            _ => EXIT_OTHER,
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return if n == 0 { Err(CliError::Usage("--threads must be positive".into())) } else { Ok(n) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!("{THREADS_ENV}='{v}' is not a positive integer"))),
        },
        Err(_) => Ok(0),
    }
}

fn open_output(path: &str) -> Result<Box<dyn Write>, CliError> {
    Ok(if path == "-" {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(File::create(path)?))
    })
}

fn write_json<T: Serialize>(value: &T, out: &str) -> Result<(), CliError> {
    let mut w = open_output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run_analytic(cfg: &LoadedConfig) -> Result<serde_json::Value, CliError> {
    let model = AnalyticModel::new(&cfg.scenario, &cfg.quadrature)?;
    let m = model.metrics()?;
    Ok(json!({
        "engine": "analytic",
        "tau": cfg.scenario.tau,
        "coverage": m.coverage,
        "ase": m.ase,
        "ee": m.ee,
        "association": m.association,
        "beta_max": cfg.scenario.beta_max(),
    }))
}

fn run_mc(cfg: &LoadedConfig, trials: usize, seed: u64) -> Result<serde_json::Value, CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let sim = Simulator::new(&cfg.scenario, &cfg.monte_carlo).map_err(LoadError::Invalid)?;
    let m = sim.estimate_metrics(trials, seed);
    Ok(json!({
        "engine": "montecarlo",
        "trials": trials,
        "seed": seed,
        "mode": sim.mode(),
        "tau": cfg.scenario.tau,
        "coverage": m.coverage,
        "ase": m.ase,
        "ee": m.ee,
        "association": m.assoc_freq,
    }))
}

fn run_optimize(cfg: &LoadedConfig, args: &OptimizeArgs) -> Result<serde_json::Value, CliError> {
    match args.target {
        Target::Beta => {
            let method = match args.method {
                MethodArg::Root => BetaMethod::Root,
                MethodArg::Scan => BetaMethod::Scan,
            };
            let r = optimal_beta(&cfg.scenario, method)?;
            Ok(json!({
                "target": Target::Beta,
                "value": r.beta_star,
                "objective": r.objective,
                "method": r.method,
                "diagnostics": {
                    "residual": r.residual,
                    "boundary": r.boundary,
                    "multimodal": r.multimodal,
                    "sign_changes": r.sign_changes,
                    "beta_max": cfg.scenario.beta_max(),
                },
            }))
        }
        Target::Mu => {
            let r = optimal_mu(&cfg.scenario, args.metric.into(), args.resolution, &cfg.quadrature)?;
            Ok(json!({
                "target": Target::Mu,
                "value": r.mu_star,
                "objective": r.value,
                "method": "grid",
                "diagnostics": { "metric": r.metric, "curve": r.curve },
            }))
        }
    }
}

fn sweep_spec(args: &SweepArgs, seed: u64) -> Result<SweepSpec, CliError> {
    let values = match (&args.range, &args.values) {
        (Some(r), _) => parse_range(r),
        (None, Some(v)) => parse_values(v),
        (None, None) => Err("either --range or --values is required".to_string()),
    }
    .map_err(CliError::Usage)?;
    if values.len() < 2 {
        return Err(CliError::Usage("a sweep needs at least 2 values".into()));
    }
    if args.engine != Engine::Analytic && args.mc_trials == 0 {
        return Err(CliError::Usage("--mc-trials must be positive".into()));
    }
    Ok(SweepSpec {
        variable: args.variable,
        values,
        outputs: args.outputs.clone(),
        engine: args.engine,
        mc_trials: args.mc_trials,
        master_seed: seed,
    })
}

fn dispatch(cli: &Cli, cfg: &LoadedConfig) -> Result<(), CliError> {
    match &cli.command {
        Command::Analytic => write_json(&run_analytic(cfg)?, &cli.out),
        Command::Mc { trials } => write_json(&run_mc(cfg, *trials, cli.seed)?, &cli.out),
        Command::Optimize(args) => write_json(&run_optimize(cfg, args)?, &cli.out),
        Command::Sweep(args) => {
            let spec = sweep_spec(args, cli.seed)?;
            let rows = run_sweep(&spec, cfg);
            write_csv(&rows, open_output(&cli.out)?)?;
            Ok(())
        }
        Command::Validate { trials } => {
            if *trials == 0 {
                return Err(CliError::Usage("--trials must be positive".into()));
            }
            let checks = run_validation(cfg, *trials, cli.seed)?;
            write_checks(&checks, open_output(&cli.out)?)?;
            match checks.iter().filter(|c| !c.pass).count() {
                0 => Ok(()),
                n => Err(CliError::ValidationFailed(n)),
            }
        }
    }
}

/// Run a parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli.config.as_deref(), &cli.set)?;
    let threads = resolve_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    pool.install(|| dispatch(cli, &cfg))
}

/// Parse `std::env::args`, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        let bad = LoadError::Invalid(crate::params::ScenarioConfig { gamma: 2.0, ..crate::params::ScenarioConfig::reference() }
            .validate()
            .unwrap_err());
        assert_eq!(CliError::from(bad).exit_code(), EXIT_CONFIG);
        assert_eq!(CliError::ValidationFailed(1).exit_code(), EXIT_VALIDATION);
        let nc = AnalyticError::NonConvergence { quantity: "x", failures: 1, achieved: 1.0 };
        assert_eq!(CliError::from(OptimizeError::Analytic(nc)).exit_code(), EXIT_NONCONVERGENCE);
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(main_with_args(["ris-stogeo", "analytic", "--bogus"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["ris-stogeo", "--set", "gamma=3", "analytic"]), EXIT_CONFIG);
    }

    #[test]
    fn sweep_spec_from_flags() {
        let cli = Cli::try_parse_from(["x", "sweep", "--variable", "mu", "--range", "0:1:5", "--outputs", "coverage,ase"]).unwrap();
        let Command::Sweep(args) = &cli.command else { panic!() };
        let spec = sweep_spec(args, 7).unwrap();
        assert_eq!(spec.values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(spec.outputs, vec![Output::Coverage, Output::Ase]);
        assert_eq!(spec.master_seed, 7);
        let cli = Cli::try_parse_from(["x", "sweep", "--variable", "mu", "--values", "0.5"]).unwrap();
        let Command::Sweep(args) = &cli.command else { panic!() };
        assert!(sweep_spec(args, 1).is_err());
    }
}
