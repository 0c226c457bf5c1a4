//! `wiener`: scenario-driven front end. Exit status 0 on success, 1 on configuration errors,
//! 2 on numerical failures (solver stagnation, truncated balls).

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Run;
use scenario::Scenario;

#[derive(Parser)]
#[command(name = "wiener", version, about = "Capacities, Green functions and boundary regularity on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Directory for reports.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// `key=value` with a dotted key, applied to the scenario before parsing.
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Wiener profile and verdict at each point.
    Classify,
    /// Capacity of the scenario's obstacle.
    Capacity,
    /// Control distance, volume profile and doubling estimates.
    Distance,
    /// Green columns against the volume-integral band.
    Greens,
    /// Density test at each point.
    Cone,
    /// Verdicts under every listed coefficient matrix.
    Invariance,
    /// Hypothesis suite with a pass/fail table.
    Validate,
}

fn run(cli: &Cli) -> wiener_core::Result<()> {
    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| wiener_core::Error::Config("--scenario is required".into()))?;
    let scenario = Scenario::load(path, &cli.overrides)?;
    let r = Run {
        scenario,
        out: cli.out.clone(),
    };
    match cli.command {
        Command::Classify => r.classify(),
        Command::Capacity => r.capacity(),
        Command::Distance => r.distance(),
        Command::Greens => r.greens(),
        Command::Cone => r.cone(),
        Command::Invariance => r.invariance(),
        Command::Validate => r.validate(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
