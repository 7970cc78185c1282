//! `ctaug`: runs the experiment stages `prepare`, `train-cyclegan`,
//! `generate`, `train-eval` and `report` from one JSON config.
//!
//! Cache layout under `cache_dir`:
//!
//! ```text
//! split.json               patient partition
//! train_manifest.csv       original train records
//! filtered/<sha>.png       Gaussian-filtered slices
//! cyclegan/model.ckpt      translator checkpoint
//! cyclegan/losses.csv      one row per training step
//! generated/<dir>/*.png    translated slices
//! augmented_manifest.csv   train records plus generated records
//! stamps/<stage>.json      stage hashes
//! ```
//!
//! Reports go to `report_dir/<backbone>/<condition>/` with one `run<k>/`
//! directory per repetition, plus `comparison.md` at the top.

pub mod config;
pub mod plot;
pub mod stages;
pub mod stamp;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training failed: {0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Training(_) => 3,
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "ctaug", version, about = "CT slice classification experiments with CycleGAN augmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set training.n_runs=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split patients and fill the filtered-slice cache.
    Prepare(ConfigArgs),
    /// Train the translator on train-partition slices.
    TrainCyclegan {
        #[command(flatten)]
        args: ConfigArgs,
        /// Retrain even when an up-to-date checkpoint exists.
        #[arg(long)]
        force: bool,
    },
    /// Translate train slices and write the augmented manifest.
    Generate(ConfigArgs),
    /// Fine-tune and evaluate every backbone in every condition.
    TrainEval {
        #[command(flatten)]
        args: ConfigArgs,
        /// Retrain runs whose outputs are up to date.
        #[arg(long)]
        force: bool,
    },
    /// Rebuild the comparison table from saved reports.
    Report(ConfigArgs),
    /// Write a seeded synthetic CT-like dataset with a manifest.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        patients: usize,
        #[arg(long, default_value_t = 10)]
        slices: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, CliError> {
    let cache = std::env::var_os(config::CACHE_ENV).map(PathBuf::from);
    let cache = match cache {
        Some(c) if c.is_relative() => Some(
            std::env::current_dir()
                .map_err(|e| CliError::Config(e.to_string()))?
                .join(c),
        ),
        other => other,
    };
    let path = args
        .config
        .canonicalize()
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    ExperimentConfig::load(&path, &args.overrides, cache)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare(a) => stages::prepare(&load_config(&a)?).map(|_| ()),
        Command::TrainCyclegan { args, force } => stages::train_cyclegan(&load_config(&args)?, force),
        Command::Generate(a) => stages::generate(&load_config(&a)?).map(|_| ()),
        Command::TrainEval { args, force } => stages::train_eval(&load_config(&args)?, force).map(|_| ()),
        Command::Report(a) => stages::report(&load_config(&a)?).map(|_| ()),
        Command::MakeSynthetic {
            out,
            patients,
            slices,
            dim,
            seed,
        } => {
            let manifest = ctaug_core::synthetic::write_synthetic_dataset(&out, patients, slices, dim, seed)
                .map_err(|e| CliError::Data(e.to_string()))?;
            println!("wrote {}", manifest.display());
            Ok(())
        }
    }
}
