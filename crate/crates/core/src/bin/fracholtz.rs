use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fracholtz::commands::{self, Command, Overrides};
use fracholtz::config::RunConfig;

/// Caps the worker thread count when set.
const THREADS_VAR: &str = "FRACHOLTZ_THREADS";

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Forward,
    Dtn,
    Sweep,
    Asym,
    InvertSource,
    InvertPotential,
    Runge,
    Selftest,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Forward => Command::Forward,
            Cmd::Dtn => Command::Dtn,
            Cmd::Sweep => Command::Sweep,
            Cmd::Asym => Command::Asym,
            Cmd::InvertSource => Command::InvertSource,
            Cmd::InvertPotential => Command::InvertPotential,
            Cmd::Runge => Command::Runge,
            Cmd::Selftest => Command::Selftest,
        }
    }
}

/// Fractional Helmholtz forward solves, exterior measurements and inversions.
#[derive(Debug, Parser)]
#[command(name = "fracholtz", version)]
struct Cli {
    command: Cmd,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sweep frequencies.
    #[arg(long)]
    omega_points: Option<usize>,
    #[arg(long)]
    reg_min: Option<f64>,
    #[arg(long)]
    reg_max: Option<f64>,
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        omega_points: cli.omega_points,
        reg_min: cli.reg_min,
        reg_max: cli.reg_max,
    };
    let command = Command::from(cli.command);
    let result = RunConfig::load(&cli.config)
        .and_then(|cfg| overrides.apply(&cfg))
        .and_then(|cfg| commands::run_command(&cfg, command));
    match result {
        Ok(outcome) => {
            println!("{command}: {}", outcome.summary);
            for f in &outcome.files {
                println!("  wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
