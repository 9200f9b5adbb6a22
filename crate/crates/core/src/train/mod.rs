//! Noise-prediction training with Adam and best-checkpoint persistence.
//!
//! Each step draws a timestep per item and fresh Gaussian noise, noises the
//! clean batch in closed form, and regresses the network output onto the
//! noise with a mean-reduced squared error.

mod checkpoint;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, FORMAT_VERSION, MAGIC};

use crate::batch::{batch_mse, gaussian_like, ImageBatch};
use crate::denoiser::{ParameterSet, UNet, UNetConfig};
use crate::diffusion::noise_with;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::schedule::{NoiseSchedule, ScheduleConfig};

pub const BEST_CHECKPOINT: &str = "best.ckpt";

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    pub unet: UNetConfig,
    pub checkpoint_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 16,
            seed: 0,
            schedule: ScheduleConfig::desk(),
            unet: UNetConfig::desk(),
            checkpoint_dir: PathBuf::from("checkpoints"),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        self.schedule.build()?;
        self.unet.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub is_best: bool,
    /// Seconds spent in this epoch.
    pub wall_time: f64,
}

/// Mean squared error between true and predicted noise.
pub fn loss_simple(eps: &ImageBatch, eps_hat: &ImageBatch) -> Result<f64> {
    batch_mse(eps, eps_hat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    fn new(cfg: AdamConfig, params: &ParameterSet) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn update(&mut self, params: &mut ParameterSet, grads: &[Vec<f32>]) {
        self.step += 1;
        let c = self.cfg;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        let step_size = (c.learning_rate / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = c.eps as f32;
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p.data[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
            }
        }
    }
}

/// Everything that changes during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    net: UNet,
    schedule: NoiseSchedule,
    params: ParameterSet,
    grads: Vec<Vec<f32>>,
    optimizer: Adam,
    steps_taken: usize,
}

impl TrainState {
    pub fn new(
        net: UNet,
        schedule: NoiseSchedule,
        params: ParameterSet,
        adam: AdamConfig,
    ) -> Result<Self> {
        net.check_params(&params)?;
        let grads = params.iter().map(|t| vec![0.0; t.data.len()]).collect();
        let optimizer = Adam::new(adam, &params);
        Ok(Self {
            net,
            schedule,
            params,
            grads,
            optimizer,
            steps_taken: 0,
        })
    }

    /// Fresh network initialized from `rng`.
    pub fn init(cfg: &TrainConfig, rng: &mut RngState) -> Result<Self> {
        let net = UNet::new(cfg.unet.clone())?;
        let params = net.init(rng);
        Self::new(
            net,
            cfg.schedule.build()?,
            params,
            AdamConfig::new(cfg.learning_rate),
        )
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn net(&self) -> &UNet {
        &self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Gradient accumulator as filled by the most recent step.
    pub fn grads(&self) -> &[Vec<f32>] {
        &self.grads
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }
}

/// One optimizer update on a clean batch. Returns the loss before the update.
pub fn train_step(state: &mut TrainState, x0: &ImageBatch, rng: &mut RngState) -> Result<f64> {
    let steps = state.schedule.steps();
    let t: Vec<usize> = (0..x0.len()).map(|_| rng.int_inclusive(1, steps)).collect();
    let eps = gaussian_like(x0.shape(), rng)?;
    let x_t = noise_with(x0, &eps, &t, &state.schedule);
    let out = state.net.loss_and_grad(&state.params, &x_t, &t, &eps)?;
    if !out.loss.is_finite() || out.grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            t: t[0],
            context: format!(
                "training loss {} at step {}",
                out.loss,
                state.steps_taken + 1
            ),
        });
    }
    state.zero_grad();
    for (acc, g) in state.grads.iter_mut().zip(&out.grads) {
        for (a, b) in acc.iter_mut().zip(g) {
            *a += b;
        }
    }
    let mut updated = state.params.clone();
    state.optimizer.update(&mut updated, &state.grads);
    if !updated.is_finite() {
        return Err(Error::Numeric {
            t: t[0],
            context: format!("parameters after step {}", state.steps_taken + 1),
        });
    }
    state.params = updated;
    state.steps_taken += 1;
    Ok(out.loss)
}

fn check_corpus(cfg: &TrainConfig, corpus: &ImageBatch) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::Corpus("training corpus is empty".into()));
    }
    let [_, c, h, w] = corpus.shape();
    let [eh, ew] = cfg.unet.image_size;
    if c != cfg.unet.in_channels || h != eh || w != ew {
        return Err(Error::ShapeMismatch {
            left: vec![c, h, w],
            right: vec![cfg.unet.in_channels, eh, ew],
        });
    }
    let (lo, hi) = corpus.min_max();
    if lo < -1.0 || hi > 1.0 {
        return Err(Error::Domain(format!(
            "training images span [{lo}, {hi}], expected [-1, 1]"
        )));
    }
    Ok(())
}

/// Fails early if checkpoints cannot be written.
fn probe_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)?;
    Ok(())
}

pub fn train(cfg: &TrainConfig, corpus: &ImageBatch) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    train_with(cfg, corpus, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with<F>(
    cfg: &TrainConfig,
    corpus: &ImageBatch,
    mut on_epoch: F,
) -> Result<(Checkpoint, Vec<EpochRecord>)>
where
    F: FnMut(&EpochRecord),
{
    cfg.validate()?;
    check_corpus(cfg, corpus)?;
    probe_writable(&cfg.checkpoint_dir)?;
    let best_path = cfg.checkpoint_dir.join(BEST_CHECKPOINT);

    let root = RngState::new(cfg.seed);
    let mut state = TrainState::init(cfg, &mut root.split(INIT_STREAM))?;
    let mut shuffle_rng = root.split(SHUFFLE_STREAM);
    let mut noise_rng = root.split(NOISE_STREAM);

    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = corpus.select(chunk)?;
            let loss = train_step(&mut state, &batch, &mut noise_rng)?;
            total += loss * chunk.len() as f64;
        }
        let mean_loss = total / n as f64;
        let is_best = best.as_ref().is_none_or(|b| mean_loss < b.loss);
        if is_best {
            let ckpt = Checkpoint {
                schedule: cfg.schedule,
                unet: cfg.unet.clone(),
                params: state.params.clone(),
                epoch,
                loss: mean_loss,
                seed: cfg.seed,
            };
            ckpt.save(&best_path)?;
            debug!("saved {} at epoch {epoch}", best_path.display());
            best = Some(ckpt);
        }
        let record = EpochRecord {
            epoch,
            mean_loss,
            is_best,
            wall_time: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: mean loss {mean_loss:.6}{}",
            if is_best { " (best)" } else { "" }
        );
        on_epoch(&record);
        records.push(record);
    }
    let best = best.expect("at least one epoch ran");
    Ok((best, records))
}
