//! Command-line interface: fit Bayesian hierarchical Emax dose-response
//! models with shrinkage priors, calibrate prior hyperparameters, identify
//! subgroups, run simulation studies, and emit plot-ready data files.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use doseshrink_core::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "doseshrink",
    version,
    about = "Bayesian hierarchical Emax dose-response models with shrinkage priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (TOML with named blocks).
    #[arg(long, global = true, default_value = "doseshrink.toml")]
    config: PathBuf,
    /// Override the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (env DOSESHRINK_THREADS as fallback).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate horseshoe global scales against the spike-and-slab benchmark.
    Calibrate,
    /// Maximum-likelihood fit of the no-covariate sigmoid Emax model.
    Prefit,
    /// Sample the posterior and write draws, diagnostics and summaries.
    Fit,
    /// Treatment-effect posteriors, covariate selection and subgroup report
    /// from a completed fit.
    Subgroup,
    /// Run the simulation study grid.
    Simulate,
    /// Emit plot-data files from a completed fit or simulate run.
    Report,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Sampler(_) | Error::Numerical(_) => 1,
                _ => 2,
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> doseshrink_core::Result<()> {
    let threads = cli.threads.or_else(|| {
        std::env::var("DOSESHRINK_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }

    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.mcmc.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    std::fs::create_dir_all(&cfg.output.dir)?;

    match cli.command {
        Command::Calibrate => commands::calibrate(&cfg),
        Command::Prefit => commands::prefit(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Subgroup => commands::subgroup(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Report => commands::report(&cfg),
    }
}
