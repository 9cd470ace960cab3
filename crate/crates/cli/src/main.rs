mod commands;
mod config;
mod error;
mod output;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::Output;

/// Magnetic geodesic flows on Lie groups: Mañé values, trajectories,
/// connections at fixed energy and the magnetic EPDiff equation.
#[derive(Debug, Parser)]
#[command(name = "magflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Also integrate the Hamiltonian side and report the conjugacy gap (flow).
    #[arg(long, global = true)]
    dual: bool,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mañé critical value and optimal primitive.
    Mane,
    /// Integrate a magnetic geodesic.
    Flow,
    /// Connect two points by a magnetic geodesic of energy kappa.
    Connect,
    /// Integrate the magnetic EPDiff equation.
    Epdiff,
    /// Run property suites; all of them unless one is named.
    Check { suite: Option<String> },
}

fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("MAGFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("MAGFLOW_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let path = cli.config.ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("magflow-out"));
    let out = Output::new(dir, cli.quiet)?;
    match cli.command {
        Command::Mane => commands::mane(&cfg, &out),
        Command::Flow => commands::flow(&cfg, &out, cli.dual),
        Command::Connect => commands::connect(&cfg, &out),
        Command::Epdiff => commands::epdiff(&cfg, &out),
        Command::Check { suite } => commands::check(&cfg, &out, suite.as_deref()),
    }?;
    out.say(format!("wrote {}", out.dir().display()));
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("magflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
