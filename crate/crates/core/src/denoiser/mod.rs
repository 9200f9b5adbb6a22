//! Noise predictors `eps_theta(x_t, t)`.

mod graph;
mod params;
mod unet;

pub use graph::{Graph, Real, Var};
pub use params::{ParamTensor, ParameterSet};
pub use unet::{norm_groups, unet_init, unet_predict, LossAndGrad, UNet, UNetConfig};

use crate::batch::ImageBatch;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// Anything that maps a noised batch and its timesteps to predicted noise of
/// the same shape.
pub trait Denoiser {
    fn predict(&self, x_t: &ImageBatch, t: &[usize]) -> Result<ImageBatch>;
}

/// Per-item sinusoidal timestep features.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub values: Vec<Vec<f64>>,
}

/// Interleaved sin/cos features: for `i < dim / 2`,
/// `[2i] = sin(t / 10000^(2i/dim))` and `[2i + 1] = cos(t / 10000^(2i/dim))`.
pub fn sinusoidal_embedding(t: &[usize], dim: usize) -> Result<TimeEmbedding> {
    if dim < 2 || !dim.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "embedding width must be even and >= 2, got {dim}"
        )));
    }
    let freqs: Vec<f64> = (0..dim / 2)
        .map(|i| 10000f64.powf(-((2 * i) as f64) / dim as f64))
        .collect();
    let values = t
        .iter()
        .map(|&ti| {
            freqs
                .iter()
                .flat_map(|f| {
                    let arg = ti as f64 * f;
                    [arg.sin(), arg.cos()]
                })
                .collect()
        })
        .collect();
    Ok(TimeEmbedding { dim, values })
}

/// Trained (or freshly initialized) UNet bundled with its parameters.
#[derive(Debug, Clone)]
pub struct UNetDenoiser {
    net: UNet,
    params: ParameterSet,
}

impl UNetDenoiser {
    pub fn new(config: UNetConfig, params: ParameterSet) -> Result<Self> {
        let net = UNet::new(config)?;
        net.check_params(&params)?;
        Ok(Self { net, params })
    }

    pub fn net(&self) -> &UNet {
        &self.net
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }
}

impl Denoiser for UNetDenoiser {
    fn predict(&self, x_t: &ImageBatch, t: &[usize]) -> Result<ImageBatch> {
        self.net.predict(&self.params, x_t, t)
    }
}

/// Exact noise predictor for data concentrated on a single image `v`:
/// `eps(x_t, t) = (x_t - sqrt(alpha_bar_t) v) / sqrt(1 - alpha_bar_t)`.
#[derive(Debug, Clone)]
pub struct LinearOracleDenoiser {
    target: ImageBatch,
    schedule: NoiseSchedule,
}

/// Oracle denoiser for the point distribution at `x0_target` (one image,
/// broadcast over any batch size).
pub fn linear_oracle_denoiser(
    x0_target: &ImageBatch,
    schedule: &NoiseSchedule,
) -> LinearOracleDenoiser {
    LinearOracleDenoiser {
        target: x0_target.clone(),
        schedule: schedule.clone(),
    }
}

impl Denoiser for LinearOracleDenoiser {
    fn predict(&self, x_t: &ImageBatch, t: &[usize]) -> Result<ImageBatch> {
        let [n, c, h, w] = x_t.shape();
        let [tn, tc, th, tw] = self.target.shape();
        if (c, h, w) != (tc, th, tw) || (tn != 1 && tn != n) {
            return Err(Error::ShapeMismatch {
                left: x_t.shape().to_vec(),
                right: self.target.shape().to_vec(),
            });
        }
        if t.len() != n {
            return Err(Error::ShapeMismatch {
                left: x_t.shape().to_vec(),
                right: vec![t.len()],
            });
        }
        let mut data = Vec::with_capacity(x_t.data().len());
        for (i, &ti) in t.iter().enumerate() {
            self.schedule.check_t(ti)?;
            let signal = self.schedule.sqrt_alpha_bar(ti);
            let noise = self.schedule.sqrt_one_minus_alpha_bar(ti);
            let v = self.target.item(if tn == 1 { 0 } else { i });
            data.extend(
                x_t.item(i)
                    .iter()
                    .zip(v)
                    .map(|(&x, &v)| ((f64::from(x) - signal * f64::from(v)) / noise) as f32),
            );
        }
        ImageBatch::from_vec(x_t.shape(), data)
    }
}
