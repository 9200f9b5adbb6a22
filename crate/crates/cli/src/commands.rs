use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use ddpm_core::diffusion::sample_with_observer;
use ddpm_core::synthetic::write_shapes;
use ddpm_core::train::{train_with, BEST_CHECKPOINT};
use ddpm_core::{
    checkpoint_load, denormalize, evaluate_pair, format_table, forward_closed_form, load_corpus,
    save_png, ImageBatch, NoiseSchedule, PipelineConfig, RngState, ScheduleConfig,
};

use crate::config::{RunConfig, TrainOptions};
use crate::render::{labeled_rows, loss_curve, tile_grid};
use crate::{CliError, EvaluateArgs, NoiseDemoArgs, SampleArgs, SynthArgs, TrainArgs};

pub const EPOCH_LOG: &str = "epochs.jsonl";
pub const LOSS_PLOT: &str = "loss.png";
pub const MANIFEST: &str = "manifest.json";
pub const GRID: &str = "grid.png";

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(format!("writing {}", path.display())))
}

fn save_gray(img: &image::GrayImage, path: &Path) -> Result<(), CliError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::Io {
            context: format!("writing {}", path.display()),
            source: std::io::Error::other(e),
        })
}

/// One line of the epoch log. Wall time is left out so reruns produce the
/// same file.
#[derive(Serialize)]
struct EpochLine {
    epoch: usize,
    mean_loss: f64,
    is_best: bool,
}

#[derive(Serialize)]
struct TrainManifest<'a> {
    command: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    corpus_size: usize,
    best_epoch: usize,
    best_loss: f64,
    artifacts: Vec<String>,
}

pub fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(path) => TrainOptions::from_file(path)?,
        None => TrainOptions::default(),
    };
    let run = RunConfig::resolve(args.options.over(file))?;
    let corpus = load_corpus(&run.data, &run.pipeline(), run.limit)?;
    info!("loaded {} images from {}", corpus.len(), run.data.display());

    fs::create_dir_all(&run.out).map_err(io_err(format!("creating {}", run.out.display())))?;
    let log_path = run.out.join(EPOCH_LOG);
    let mut log =
        fs::File::create(&log_path).map_err(io_err(format!("creating {}", log_path.display())))?;
    let mut log_failure = None;
    let mut losses = Vec::new();
    let result = train_with(&run.train, &corpus, |r| {
        let line = EpochLine {
            epoch: r.epoch,
            mean_loss: r.mean_loss,
            is_best: r.is_best,
        };
        let json = serde_json::to_string(&line).expect("serializable");
        if let Err(e) = writeln!(log, "{json}") {
            log_failure.get_or_insert(e);
        }
        info!("epoch {} took {:.2}s", r.epoch, r.wall_time);
        losses.push(r.mean_loss);
    });
    if !losses.is_empty() {
        save_gray(&loss_curve(&losses), &run.out.join(LOSS_PLOT))?;
    }
    if let Some(e) = log_failure {
        return Err(io_err(format!("writing {}", log_path.display()))(e));
    }
    let (best, _) = result?;
    let manifest = TrainManifest {
        command: "train",
        version: env!("CARGO_PKG_VERSION"),
        config: &run,
        corpus_size: corpus.len(),
        best_epoch: best.epoch,
        best_loss: best.loss,
        artifacts: vec![
            format!("checkpoints/{BEST_CHECKPOINT}"),
            EPOCH_LOG.into(),
            LOSS_PLOT.into(),
        ],
    };
    write_json(&run.out.join(MANIFEST), &manifest)?;
    println!("best epoch {} with mean loss {:.6}", best.epoch, best.loss);
    Ok(())
}

#[derive(Serialize)]
struct SampleManifest {
    command: &'static str,
    version: &'static str,
    checkpoint: PathBuf,
    seed: u64,
    count: usize,
    image_size: [usize; 2],
    files: Vec<String>,
}

pub fn cmd_sample(args: SampleArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("count must be at least 1".into()));
    }
    if args.out.exists() && !args.out.is_dir() {
        return Err(CliError::Usage(format!("{} is a file", args.out.display())));
    }
    let ckpt = checkpoint_load(&args.checkpoint).map_err(|e| match e {
        ddpm_core::Error::Io(source) => CliError::Usage(format!(
            "cannot read checkpoint {}: {source}",
            args.checkpoint.display()
        )),
        other => other.into(),
    })?;
    let schedule = ckpt.schedule.build()?;
    let denoiser = ckpt.denoiser()?;
    let [h, w] = ckpt.unet.image_size;
    let steps = schedule.steps();
    let out = sample_with_observer(
        &denoiser,
        [args.count, 1, h, w],
        &schedule,
        &mut RngState::new(args.seed),
        |t, _| {
            if t % 10 == 0 {
                log::debug!("reverse step {t}/{steps}");
            }
        },
    )?;
    let images = denormalize(&out)?;

    fs::create_dir_all(&args.out).map_err(io_err(format!("creating {}", args.out.display())))?;
    let mut files = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let name = format!("sample_{i:04}.png");
        save_png(img, &args.out.join(&name))?;
        files.push(name);
    }
    save_gray(&tile_grid(&images), &args.out.join(GRID))?;
    files.push(GRID.into());
    write_json(
        &args.out.join(MANIFEST),
        &SampleManifest {
            command: "sample",
            version: env!("CARGO_PKG_VERSION"),
            checkpoint: args.checkpoint.clone(),
            seed: args.seed,
            count: args.count,
            image_size: [h, w],
            files,
        },
    )?;
    println!("wrote {} samples to {}", args.count, args.out.display());
    Ok(())
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    if args.pairs == 0 {
        return Err(CliError::Usage("pairs must be at least 1".into()));
    }
    let cfg = PipelineConfig {
        target_size: [args.image_size, args.image_size],
        crop_fraction: args.crop_fraction,
    };
    cfg.validate()?;
    let a = load_corpus(&args.class_a, &cfg, args.limit)?;
    let b = load_corpus(&args.class_b, &cfg, args.limit)?;
    let label_a = args
        .label_a
        .clone()
        .unwrap_or_else(|| dir_label(&args.class_a));
    let label_b = args
        .label_b
        .clone()
        .unwrap_or_else(|| dir_label(&args.class_b));
    let report = evaluate_pair(
        &a,
        &b,
        (&label_a, &label_b),
        args.strategy,
        args.pairs,
        args.seed,
    )?;
    println!("{}", format_table(std::slice::from_ref(&report)));
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

/// Percent label for a fraction, e.g. `0.25 -> "25%"`.
pub fn fraction_label(f: f64) -> String {
    format!("{}%", (f * 100.0).round() as i64)
}

/// Timestep for a noise fraction: `round(f * T)`, at least 1.
pub fn fraction_step(f: f64, steps: usize) -> usize {
    ((f * steps as f64).round() as usize).clamp(1, steps)
}

pub fn validate_fractions(fractions: &[f64]) -> Result<(), CliError> {
    if fractions.is_empty() {
        return Err(CliError::Usage("at least one fraction is required".into()));
    }
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(CliError::Usage(format!("fraction {f} is outside (0, 1]")));
        }
    }
    Ok(())
}

/// Noised copies of `originals`, one batch per fraction, all drawn from one
/// stream seeded with `seed`.
pub fn noise_rows(
    originals: &ImageBatch,
    fractions: &[f64],
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<ImageBatch>, CliError> {
    validate_fractions(fractions)?;
    let mut rng = RngState::new(seed);
    fractions
        .iter()
        .map(|&f| {
            let t = fraction_step(f, schedule.steps());
            let noised =
                forward_closed_form(originals, &vec![t; originals.len()], schedule, &mut rng)?;
            Ok(noised.x_t)
        })
        .collect()
}

pub fn cmd_noise_demo(args: NoiseDemoArgs) -> Result<(), CliError> {
    validate_fractions(&args.fractions)?;
    if args.count == 0 {
        return Err(CliError::Usage("count must be at least 1".into()));
    }
    let schedule = ScheduleConfig::linear(args.steps, args.beta_start, args.beta_end).build()?;
    let cfg = PipelineConfig::new([args.image_size, args.image_size]);
    cfg.validate()?;
    if args.out.is_dir() {
        return Err(CliError::Usage(format!(
            "{} is a directory",
            args.out.display()
        )));
    }
    let originals = load_corpus(&args.data, &cfg, Some(args.count))?;
    let noised = noise_rows(&originals, &args.fractions, &schedule, args.seed)?;

    let mut rows = vec![denormalize(&originals)?];
    let mut labels = vec![fraction_label(0.0)];
    for (f, batch) in args.fractions.iter().zip(&noised) {
        rows.push(denormalize(&batch.clamp(-1.0, 1.0))?);
        labels.push(fraction_label(*f));
        info!(
            "row {}: t = {}",
            fraction_label(*f),
            fraction_step(*f, schedule.steps())
        );
    }
    let slices: Vec<&[ddpm_core::RawImage]> = rows.iter().map(Vec::as_slice).collect();
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(format!("creating {}", parent.display())))?;
    }
    save_gray(&labeled_rows(&slices, &labels), &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("count must be at least 1".into()));
    }
    if !(8..=32).contains(&args.size) {
        return Err(CliError::Usage(format!(
            "size {} must be in 8..=32",
            args.size
        )));
    }
    let paths = write_shapes(&args.out, args.count, args.size, args.seed)?;
    println!("wrote {} images to {}", paths.len(), args.out.display());
    Ok(())
}
