//! Command-line driver: configuration, subcommands and verification reports.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use finsler_core::boundary::Curve;
use finsler_core::metric::MetricSpec;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod report;
pub mod verify;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] finsler_core::Error),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("csv: {0}")]
    Csv(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "finsler",
    version,
    about = "Finsler distance to a boundary: fields, conjugate points and checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; falls back to FINSLER_FOOT_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomised checks.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Distance field over the configured box.
    Field,
    /// Conjugate distance along a sweep of the boundary.
    Conjugate,
    /// Cut locus and beyond-conjugate points of the field.
    Cutlocus,
    /// Smallest eigenvalue of the second variation and the degeneracy identity.
    Secondvar,
    /// Full verification suite.
    Verify,
}

/// Everything a subcommand needs.
pub struct Context {
    pub config: RunConfig,
    pub metric: MetricSpec,
    pub curve: Curve,
    pub out: PathBuf,
    pub seed: u64,
}

impl Context {
    pub fn new(config: RunConfig, out: PathBuf, seed: u64) -> Result<Self, CliError> {
        let metric = config.metric.build()?;
        let curve = config.boundary.build()?;
        Ok(Context {
            config,
            metric,
            curve,
            out,
            seed,
        })
    }
}

fn threads(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("FINSLER_FOOT_THREADS") {
        Ok(s) => s.trim().parse().map_err(|_| {
            CliError::Config(format!("FINSLER_FOOT_THREADS={s:?} is not a thread count"))
        }),
        Err(_) => Ok(0),
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = RunConfig::from_json(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(cli.out.display().to_string(), e))?;
    let ctx = Context::new(config, cli.out.clone(), cli.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(cli.threads)?)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Field => commands::field(&ctx),
        Command::Cutlocus => commands::cutlocus(&ctx),
        Command::Conjugate => commands::conjugate(&ctx),
        Command::Secondvar => commands::secondvar(&ctx),
        Command::Verify => verify::verify(&ctx),
    })
}

/// Parses `args` and runs the subcommand. Exit codes: 0 success, 1 a check
/// failed (or the computation did), 2 configuration or usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("finsler: {e}");
            e.exit_code()
        }
    }
}
