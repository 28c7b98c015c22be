//! `otoc`: thermal OTOC experiments from a TOML configuration.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical or output error.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Command;
use config::RunConfig;
use error::{CliError, CliResult};
use output::OutputDir;

#[derive(Parser)]
#[command(name = "otoc", version, about = "Thermal OTOCs of a two-copy transverse-field Ising chain")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Exact O(t) from the spectrum at every configured temperature.
    Oracle(Args),
    /// Optimize TFD preparation angles and report fidelities.
    TfdOptimize(Args),
    /// Full pipeline: prepare, perturb, evolve, measure.
    Run(Args),
    /// Decay rates across temperatures.
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Sub::Oracle(a) => (Command::Oracle, a),
        Sub::TfdOptimize(a) => (Command::TfdOptimize, a),
        Sub::Run(a) => (Command::Run, a),
        Sub::Sweep(a) => (Command::Sweep, a),
    };
    match run(cmd, &args) {
        Ok(out) => {
            for name in out.written() {
                println!("{}", out.root().join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cmd: Command, args: &Args) -> CliResult<OutputDir> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::from_toml(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", args.config.display())),
        other => other,
    })?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    commands::validate(cmd, &cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    match args.jobs {
        Some(0) => return Err(CliError::Config("--jobs must be at least 1".into())),
        Some(j) => builder = builder.num_threads(j),
        None => {}
    }
    let pool = builder.build().map_err(|e| CliError::Numerical(format!("cannot start worker threads: {e}")))?;
    // `--out` is not echoed into the manifest, so the same run in two directories stays byte-identical.
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let mut out = OutputDir::create(&dir)?;
    pool.install(|| commands::execute(cmd, &cfg, &mut out))?;
    Ok(out)
}
