//! Training run configuration: a flat JSON file merged with command-line
//! flags. Flags win over the file, and the file wins over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use ddpm_core::{PipelineConfig, ScheduleConfig, TrainConfig, UNetConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 8x8 images, two levels.
    Toy,
    /// 32x32 images, three levels.
    Desk,
    /// 256x256 images, five levels.
    Full,
}

impl Preset {
    pub fn unet(self) -> UNetConfig {
        match self {
            Self::Toy => UNetConfig::toy(),
            Self::Desk => UNetConfig::desk(),
            Self::Full => UNetConfig::full(),
        }
    }
}

/// Every tunable of a training run. Used both as the config file schema and
/// as the flag set, so the two cannot drift apart.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    /// Directory of training images.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory for checkpoints, logs and plots.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    #[serde(alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Network preset; individual size flags override it.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Square image side, in pixels.
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub base_width: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub level_widths: Option<Vec<usize>>,
    #[arg(long)]
    pub blocks_per_level: Option<usize>,
    #[arg(long)]
    pub time_embed_dim: Option<usize>,
    /// Number of diffusion steps T.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    #[arg(long)]
    pub crop_fraction: Option<f64>,
    /// Use at most this many images.
    #[arg(long)]
    pub limit: Option<usize>,
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($field:ident),+ $(,)?) => {
        TrainOptions { $($field: $flags.$field.or($file.$field)),+ }
    };
}

impl TrainOptions {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set here take precedence over those in `file`.
    pub fn over(self, file: TrainOptions) -> TrainOptions {
        overlay!(
            self,
            file,
            data,
            out,
            epochs,
            learning_rate,
            batch_size,
            seed,
            preset,
            image_size,
            base_width,
            level_widths,
            blocks_per_level,
            time_embed_dim,
            steps,
            beta_start,
            beta_end,
            crop_fraction,
            limit,
        )
    }
}

/// Fully resolved and validated training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub limit: Option<usize>,
    pub crop_fraction: f64,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn resolve(opts: TrainOptions) -> Result<Self, CliError> {
        let data = opts.data.ok_or_else(|| {
            CliError::Usage("no data directory given (--data or \"data\")".into())
        })?;
        if !data.is_dir() {
            return Err(CliError::Usage(format!(
                "data directory {} does not exist",
                data.display()
            )));
        }
        let out = opts.out.unwrap_or_else(|| PathBuf::from("runs/train"));
        if out.exists() && !out.is_dir() {
            return Err(CliError::Usage(format!(
                "run directory {} is a file",
                out.display()
            )));
        }

        let mut unet = opts.preset.unwrap_or(Preset::Desk).unet();
        if let Some(side) = opts.image_size {
            unet.image_size = [side, side];
        }
        if let Some(v) = opts.base_width {
            unet.base_width = v;
        }
        if let Some(v) = opts.level_widths {
            unet.level_widths = v;
        }
        if let Some(v) = opts.blocks_per_level {
            unet.blocks_per_level = v;
        }
        if let Some(v) = opts.time_embed_dim {
            unet.time_embed_dim = v;
        }
        let desk = ScheduleConfig::desk();
        let schedule = ScheduleConfig::linear(
            opts.steps.unwrap_or(desk.steps),
            opts.beta_start.unwrap_or(desk.beta_start),
            opts.beta_end.unwrap_or(desk.beta_end),
        );
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            epochs: opts.epochs.unwrap_or(defaults.epochs),
            learning_rate: opts.learning_rate.unwrap_or(defaults.learning_rate),
            batch_size: opts.batch_size.unwrap_or(defaults.batch_size),
            seed: opts.seed.unwrap_or(defaults.seed),
            schedule,
            unet,
            checkpoint_dir: out.join("checkpoints"),
        };
        train.validate()?;
        let run = Self {
            data,
            out,
            limit: opts.limit,
            crop_fraction: opts
                .crop_fraction
                .unwrap_or(PipelineConfig::default().crop_fraction),
            train,
        };
        run.pipeline().validate()?;
        if run.limit == Some(0) {
            return Err(CliError::Usage("limit must be at least 1".into()));
        }
        Ok(run)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            target_size: self.train.unet.image_size,
            crop_fraction: self.crop_fraction,
        }
    }
}
