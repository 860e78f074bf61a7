//! `radartrack`: batch front-end for the radar tracking analytics, the Monte
//! Carlo simulator and the frame optimizer.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radar_tracking::analytics::AnalyticsError;
use radar_tracking::optimizer::OptimizeError;
use radar_tracking::simulator::SimError;
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::InvalidParameter { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Analytics(a) => a.into(),
            SimError::InvalidConfig { .. } | SimError::Geometry(_) | SimError::Io(_) => {
                CliError::Config(e.to_string())
            }
            SimError::ThreadPool(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Analytics(a) => a.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "radartrack",
    version,
    about = "Radar tracking probability under block ALOHA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Interferer rule, lemma1 or def1; overrides the config.
    #[arg(long, global = true)]
    mode: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Moments, tracking probability and run statistics by quadrature.
    Analyze,
    /// Monte Carlo estimates of the same statistics.
    Simulate,
    /// Analytics over one or two parameter axes.
    Sweep,
    /// Optimal access probability and block count per use case.
    Optimize,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    if let Some(mode) = &cli.mode {
        cfg.mode = mode.clone();
    }
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        // the global pool serves the optimizer and the sweep; ignore a pool
        // that is already initialised
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    std::fs::create_dir_all(&cli.out)?;
    let mut run = manifest::Run::start(cli.command.name(), &cfg, &cli.out);
    match cli.command {
        Command::Analyze => commands::analyze(&cfg, &mut run)?,
        Command::Simulate => commands::simulate(&cfg, &mut run)?,
        Command::Sweep => commands::sweep(&cfg, &mut run)?,
        Command::Optimize => commands::optimize(&cfg, &mut run)?,
    }
    run.finish()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("radartrack: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
