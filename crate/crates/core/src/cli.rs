//! Command-line front end. Exit codes: 0 success, 1 usage or validation
//! error, 2 runtime failure, 3 a validation suite failed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{parse_config, ConfigError, RunConfig, DEFAULT_OUTPUT};
use crate::first_passage::{joint_density, ExitProblem, FirstPassageError};
use crate::fusion::{
    centralized_fixed, centralized_sequential, estimate_fixed, estimate_sequential, estimate_timing_only,
    reconstruct, EstimateResult, EstimatorKind,
};
use crate::harness::{run_experiment, suites, HarnessError, Regime};
use crate::io::{config_hash, output_name, write_density, write_estimates, write_file, write_messages, write_paths, write_report, IoError};
use crate::model::{build_model, path_statistics, simulate_paths};
use crate::trigger::run_sensors;

#[derive(Debug, Parser)]
#[command(name = "bitfusion", version, about = "One-bit event-triggered decentralized drift estimation")]
pub struct Cli {
    /// TOML run configuration (required by simulate, estimate and experiment).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for replications.
    #[arg(long, global = true, env = "BITFUSION_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one replication; write paths and messages.
    Simulate,
    /// Simulate one replication and apply every configured estimator.
    Estimate,
    /// Run the configured Monte Carlo experiment.
    Experiment,
    /// Tabulate the joint exit-time densities of one renewal.
    Density {
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Run named validation suites (or `all`).
    Suite {
        #[arg(long, default_value = "all")]
        name: String,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("{0} suite(s) failed")]
    SuiteFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::SuiteFailed(_) => 3,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidConfig(v) => CliError::Config(ConfigError::Validation(v)),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("this command needs --config PATH".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

/// Hash of everything that determines results other than the seed.
fn run_hash(cfg: &RunConfig) -> Result<String, CliError> {
    let mut c = cfg.clone();
    c.output = PathBuf::new();
    Ok(config_hash(&c)?)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // fails only if a pool already exists, in which case that one is used
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate => simulate(&load(cli)?),
        Command::Estimate => estimate(&load(cli)?),
        Command::Experiment => experiment(&load(cli)?),
        Command::Density {
            lambda,
            delta,
            x,
            t_max,
            points,
        } => density(cli, *lambda, *delta, *x, *t_max, *points),
        Command::Suite { name } => suite(name),
    }
}

fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = build_model(cfg.model.clone()).map_err(runtime)?;
    let grid = cfg.grid().map_err(runtime)?;
    let paths = simulate_paths(&model, cfg.experiment.lambda_true, grid, cfg.master_seed).map_err(runtime)?;
    let stats = path_statistics(&paths, &model).map_err(runtime)?;
    let log = run_sensors(&stats, &model, &cfg.trigger).map_err(runtime)?;
    let hash = run_hash(cfg)?;
    let mut buf = Vec::new();
    write_paths(&mut buf, &paths, &stats)?;
    let p1 = write_file(&cfg.output, &output_name("paths", &hash, cfg.master_seed, "csv"), &buf)?;
    buf.clear();
    write_messages(&mut buf, &log)?;
    let p2 = write_file(&cfg.output, &output_name("messages", &hash, cfg.master_seed, "csv"), &buf)?;
    println!("{}\n{}", p1.display(), p2.display());
    Ok(())
}

fn estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let model = build_model(cfg.model.clone()).map_err(runtime)?;
    let grid = cfg.grid().map_err(runtime)?;
    let paths = simulate_paths(&model, cfg.experiment.lambda_true, grid, cfg.master_seed).map_err(runtime)?;
    let stats = path_statistics(&paths, &model).map_err(runtime)?;
    let log = run_sensors(&stats, &model, &cfg.trigger).map_err(runtime)?;
    let state = reconstruct(&log, &model, &cfg.trigger).map_err(runtime)?;
    let points: Vec<f64> = match &cfg.experiment.regime {
        Regime::FixedHorizon { t_list, .. } => t_list.clone(),
        Regime::Sequential { gamma_list, .. } => gamma_list.clone(),
        Regime::DiscreteSampling { t, .. } => vec![*t],
    };
    let mut results: Vec<(f64, EstimateResult)> = Vec::new();
    for &p in &points {
        for &e in &cfg.experiment.estimators {
            let r = match e {
                EstimatorKind::CentralizedFixed => centralized_fixed(&stats, p),
                EstimatorKind::CentralizedSequential => centralized_sequential(&stats, p),
                EstimatorKind::DecentralizedFixed => estimate_fixed(&state, p),
                EstimatorKind::DecentralizedSequential => estimate_sequential(&state, p, &grid),
                EstimatorKind::TimingOnly => estimate_timing_only(&state, p),
            }
            .map_err(runtime)?;
            results.push((p, r));
        }
    }
    let mut buf = Vec::new();
    write_estimates(&mut buf, &results)?;
    let path = write_file(&cfg.output, &output_name("estimates", &run_hash(cfg)?, cfg.master_seed, "csv"), &buf)?;
    for (p, r) in &results {
        println!("{:<26} point {p:<10} value {:.6}", r.estimator.to_string(), r.value);
    }
    println!("{}", path.display());
    Ok(())
}

fn experiment(cfg: &RunConfig) -> Result<(), CliError> {
    let report = run_experiment(&cfg.experiment_config())?;
    for a in &report.aggregates {
        println!(
            "{:<26} point {:<10} h {:<8} n {:<6} failures {:<4} mean {:.6} std var {:.4}",
            a.estimator.to_string(),
            a.point,
            a.h.map(|h| h.to_string()).unwrap_or_else(|| "-".into()),
            a.n,
            a.failures,
            a.mean,
            a.std_variance
        );
    }
    for p in write_report(&cfg.output, &report)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn density(cli: &Cli, lambda: f64, delta: f64, x: f64, t_max: f64, points: usize) -> Result<(), CliError> {
    let usage = |e: FirstPassageError| CliError::Usage(e.to_string());
    let p = ExitProblem::new(delta, x, lambda).map_err(usage)?;
    if !(t_max > 0.0 && t_max.is_finite()) || points == 0 {
        return Err(CliError::Usage("--t-max must be positive and --points at least 1".into()));
    }
    let table = (1..=points)
        .map(|k| {
            let t = t_max * k as f64 / points as f64;
            joint_density(&p, t).map(|(up, down)| (t, up, down))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    let mut buf = Vec::new();
    write_density(&mut buf, &table)?;
    let out: &Path = cli.out.as_deref().unwrap_or(Path::new(DEFAULT_OUTPUT));
    let hash = config_hash(&(lambda, delta, x, t_max, points))?;
    let path = write_file(out, &output_name("density", &hash, cli.seed.unwrap_or(0), "csv"), &buf)?;
    println!("{}", path.display());
    Ok(())
}

fn suite(name: &str) -> Result<(), CliError> {
    let outcomes = suites::run_suite(name)?;
    let mut failed = 0;
    for o in &outcomes {
        println!("{}", o.summary());
        for l in &o.lines {
            println!("{l}");
        }
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        Err(CliError::SuiteFailed(failed))
    } else {
        Ok(())
    }
}
