use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use comex::config::{self, ConfigError, ExperimentConfig};
use comex::engine::threads_from_env;

/// Simulate cooperative bandit agents under gated communication.
#[derive(Parser)]
#[command(name = "comex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (variant, gate) job of an experiment and write CSV/JSON outputs.
    Run(Source),
    /// Print the closed-form regret and cost bounds for an instance.
    Bounds(Source),
}

#[derive(Args)]
struct Source {
    /// JSON experiment configuration.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (paper-fig2a .. paper-fig2e).
    #[arg(long)]
    preset: Option<String>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of Monte-Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => config::preset(name).ok_or_else(|| {
                ConfigError::Parse(format!(
                    "unknown preset `{name}` (expected one of {})",
                    config::PRESET_NAMES.join(", ")
                ))
            })?,
            (None, None) => unreachable!("clap requires one source"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(runs) = self.runs {
            cfg.runs = runs;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<(), ConfigError> {
    match cli.command {
        Command::Run(src) => {
            let cfg = src.load()?;
            config::run_experiment(&cfg, threads_from_env(), |line| eprintln!("{line}"))?;
        }
        Command::Bounds(src) => {
            let cfg = src.load()?;
            print!("{}", config::bounds_table(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
