use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pce_shaper_cli::commands::Command;
use pce_shaper_cli::{CliError, ExperimentConfig, Overrides};

/// Polynomial-chaos analysis of input shapers for an oscillator with
/// uncertain, switching stiffness.
#[derive(Parser, Debug)]
#[command(name = "pce-shaper", version)]
struct Cli {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed, overriding `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Short horizon (t1 = 10, t2 = 20) and degree 12 for quick runs.
    #[arg(long, global = true)]
    reduced: bool,
    #[command(subcommand)]
    command: Verb,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Verb {
    /// Residual-energy mean and variance over a sample-size ladder.
    McConvergence,
    /// State moments per PCE degree against a sampled reference.
    PceConvergence,
    /// Wall-clock cost of PCE per degree and of sampling.
    Timing,
    /// Residual energy for unshaped, reference and optimised shapers.
    CompareShapers,
    /// Robust minus GSA residual energy over a frequency grid.
    Heatmap,
}

impl From<Verb> for Command {
    fn from(v: Verb) -> Self {
        match v {
            Verb::McConvergence => Command::McConvergence,
            Verb::PceConvergence => Command::PceConvergence,
            Verb::Timing => Command::Timing,
            Verb::CompareShapers => Command::CompareShapers,
            Verb::Heatmap => Command::Heatmap,
        }
    }
}

fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        out_dir: cli.out.clone(),
        seed: cli.seed,
        reduced: cli.reduced,
    });
    Command::from(cli.command).run(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = serde_json::json!({ "error": { "kind": "usage", "message": e.to_string() } });
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
