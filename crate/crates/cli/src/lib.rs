//! Command-line surface for training, sampling, evaluating and visualizing
//! diffusion models on small grayscale corpora.
//!
//! Exit codes: 0 on success, 1 on I/O failure while producing outputs, 2 on
//! usage or configuration errors, 3 on numeric failure.

pub mod commands;
pub mod config;
pub mod logger;
pub mod render;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use thiserror::Error;

use ddpm_core::eval::DEFAULT_PAIRS;
use ddpm_core::PairingStrategy;

use config::TrainOptions;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ddpm_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Io { .. } | Self::Core(ddpm_core::Error::Io(_)) => EXIT_IO,
            Self::Core(ddpm_core::Error::Numeric { .. }) => EXIT_NUMERIC,
            Self::Core(_) => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ddpm",
    version,
    about = "Denoising diffusion on small grayscale image corpora"
)]
pub struct Cli {
    /// Log level for the JSON-lines log on stderr.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a noise predictor on a directory of images.
    Train(TrainArgs),
    /// Generate images from a checkpoint.
    Sample(SampleArgs),
    /// Compare two image directories by MSE and SSIM.
    Evaluate(EvaluateArgs),
    /// Show images at increasing noise levels.
    NoiseDemo(NoiseDemoArgs),
    /// Write a synthetic corpus of filled circles and rectangles.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat JSON file with any of the option names below (underscored).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub options: TrainOptions,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "samples")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub class_a: PathBuf,
    #[arg(long)]
    pub class_b: PathBuf,
    /// Row label for the first class; defaults to the directory name.
    #[arg(long)]
    pub label_a: Option<String>,
    #[arg(long)]
    pub label_b: Option<String>,
    #[arg(long, default_value = "random")]
    pub strategy: PairingStrategy,
    /// Number of random pairs; ignored by the aligned strategy.
    #[arg(long, default_value_t = DEFAULT_PAIRS)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub image_size: usize,
    /// Center-crop share; 1.0 only resizes.
    #[arg(long, default_value_t = 1.0)]
    pub crop_fraction: f64,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NoiseDemoArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated noise fractions in (0, 1]; each maps to t = round(f T).
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1.0")]
    pub fractions: Vec<f64>,
    #[arg(long, default_value = "noise_demo.png")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Images per row.
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long, default_value_t = 32)]
    pub image_size: usize,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub beta_start: f64,
    #[arg(long, default_value_t = 0.4)]
    pub beta_end: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => commands::cmd_train(a),
        Command::Sample(a) => commands::cmd_sample(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::NoiseDemo(a) => commands::cmd_noise_demo(a),
        Command::Synth(a) => commands::cmd_synth(a),
    }
}
