//! Experiment front end: reproduces the solver studies at desk scale and
//! emits CSV/field artifacts for plotting.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Solver(#[from] hjres::HjError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hjres",
    about = "Hamilton-Jacobi solvers by residual minimization of monotone schemes",
    version
)]
struct Cli {
    /// Path to a TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base RNG seed (overrides the config value).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory root (overrides the config value).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Rayon thread count (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Validate the configuration and print the plan without computing.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Write into a fixed directory per experiment, overwriting without a
    /// timestamp.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 1D eikonal on grid functions: cold gradient descent per grid size,
    /// the multilevel schedule, and the Jacobian report at the stalled
    /// iterate.
    Eikonal1dGrid,
    /// 1D damped eikonal with the network interpolant: seeded repetitions of
    /// fixed-spacing training and the 4-stage schedule.
    Eikonal1dNn,
    /// Level-set obstacle problem at the configured dimension: two-phase
    /// schedule, level-set slices, complementarity report.
    Obstacle,
    /// Isaacs annulus reference solves (and their self-convergence report).
    Isaacs2d,
    /// Sweep grid spacings and emit the Jacobian conditioning CSV.
    AnalyzeJacobian,
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.display().to_string();
    }
    cfg.validate()?;

    if cli.threads > 0 {
        hjres::exec::configure_threads(cli.threads);
    }

    let name = match cli.command {
        Command::Eikonal1dGrid => "eikonal1d-grid",
        Command::Eikonal1dNn => "eikonal1d-nn",
        Command::Obstacle => "obstacle",
        Command::Isaacs2d => "isaacs2d",
        Command::AnalyzeJacobian => "analyze-jacobian",
    };
    if cli.dry_run {
        println!("dry run: configuration valid for `{name}`");
        println!("seed = {}", cfg.seed);
        println!("out  = {}", cfg.out);
        return Ok(());
    }

    let out_root = PathBuf::from(&cfg.out);
    let dir = output::RunDir::create(&out_root, name, cli.force)?;
    println!("writing artifacts to {}", dir.path.display());
    match cli.command {
        Command::Eikonal1dGrid => commands::eikonal_grid::run(&cfg, &dir),
        Command::Eikonal1dNn => commands::eikonal_nn::run(&cfg, &dir),
        Command::Obstacle => commands::obstacle::run(&cfg, &dir),
        Command::Isaacs2d => commands::isaacs::run(&cfg, &dir),
        Command::AnalyzeJacobian => commands::analyze_jacobian::run(&cfg, &dir),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
