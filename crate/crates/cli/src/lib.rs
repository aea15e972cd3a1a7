//! Command-line harness: simulate datasets, fit samplers and report
//! diagnostics, with every run described by a JSON manifest.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Config, SamplerKind};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "hula", version, about = "Hybrid unadjusted Langevin experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and its ground-truth parameters.
    Simulate(RunArgs),
    /// Run one sampler and write its draws.
    Fit(RunArgs),
    /// Write trace, ESS, probability-curve and score tables.
    Report(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerKind>,
    /// Subsample size as a fraction of the observations.
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

impl RunArgs {
    pub fn effective_config(&self, report: bool) -> CliResult<Config> {
        let mut config = Config::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(s) = self.sampler {
            if report {
                config.report.chains = vec![s];
            } else {
                config.fit.sampler = s;
            }
        }
        if let Some(f) = self.subsample {
            config.fit.subsample = f;
        }
        if let Some(k) = self.iterations {
            config.fit.iterations = k;
        }
        if let Some(b) = self.burn_in {
            config.fit.burn_in = b;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Caps the global worker pool at `HULA_THREADS` when set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("HULA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("HULA_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("HULA_THREADS: {e}")))
}

/// Creates the output directory and returns its absolute path, so manifest
/// entries resolve from any working directory.
fn output_dir(out: &Path) -> CliResult<PathBuf> {
    let err = |source| CliError::Write {
        path: out.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(out).map_err(err)?;
    out.canonicalize().map_err(err)
}

pub fn run(cli: &Cli) -> CliResult<RunManifest> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(args) => {
            let config = args.effective_config(false)?;
            commands::simulate(&config, &output_dir(&args.out)?)
        }
        Command::Fit(args) => {
            let config = args.effective_config(false)?;
            commands::fit(&config, &output_dir(&args.out)?)
        }
        Command::Report(args) => {
            let config = args.effective_config(true)?;
            commands::report(&config, &output_dir(&args.out)?)
        }
    }
}
