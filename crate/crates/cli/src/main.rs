//! Batch experiment runner: `mflab run <config>` executes a scenario and
//! writes result.json plus a manifest; `mflab validate <config>` reports the
//! assumption profile and the lambda windows without running anything heavy.

mod config;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "mflab", version, about = "Mean-field vortex laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the seed of randomized probes.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the geometry resolution.
        #[arg(long)]
        resolution: Option<usize>,
        /// Worker threads for independent lambda-grid points and trials.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check assumptions and lambda windows without running the scenario.
    Validate {
        config: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
}

fn load(
    path: &PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    resolution: Option<usize>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    if let Some(s) = seed {
        cfg.output.seed = s;
    }
    if let Some(r) = resolution {
        cfg.geometry.resolution = r;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            resolution,
            jobs,
        } => load(&config, out, seed, resolution).and_then(|cfg| {
            let run = scenarios::run(&cfg, jobs.max(1))?;
            Ok(run.exit_code)
        }),
        Command::Validate { config, resolution } => {
            load(&config, None, None, resolution).and_then(|cfg| {
                let report = scenarios::validate(&cfg)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
                Ok(0)
            })
        }
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
