//! Forward noising and reverse (ancestral) sampling.

use log::warn;

use crate::batch::{gaussian_like, ImageBatch};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::schedule::NoiseSchedule;

/// A noised batch together with the exact noise and per-item timesteps used.
#[derive(Debug, Clone)]
pub struct ForwardSample {
    pub x_t: ImageBatch,
    pub eps: ImageBatch,
    pub t: Vec<usize>,
}

fn shape_check(a: &ImageBatch, b: &ImageBatch) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// One Markov step of the forward chain with an explicit variance:
/// `sqrt(1 - beta) * x_prev + sqrt(beta) * z`.
pub fn forward_kernel(x_prev: &ImageBatch, beta: f64, rng: &mut RngState) -> Result<ImageBatch> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta {beta} outside [0, 1)")));
    }
    let z = gaussian_like(x_prev.shape(), rng)?;
    let keep = (1.0 - beta).sqrt();
    let spread = beta.sqrt();
    let data = x_prev
        .data()
        .iter()
        .zip(z.data())
        .map(|(&x, &n)| (keep * f64::from(x) + spread * f64::from(n)) as f32)
        .collect();
    Ok(ImageBatch::from_raw(x_prev.shape(), data))
}

/// Samples `q(x_t | x_{t-1})` at step `t` of the schedule.
pub fn forward_step(
    x_prev: &ImageBatch,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<ImageBatch> {
    schedule.check_t(t)?;
    forward_kernel(x_prev, schedule.beta(t), rng)
}

/// Samples `q(x_t | x_0)` directly, one timestep per batch item.
pub fn forward_closed_form(
    x0: &ImageBatch,
    t: &[usize],
    schedule: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<ForwardSample> {
    if t.len() != x0.len() {
        return Err(Error::ShapeMismatch {
            left: x0.shape().to_vec(),
            right: vec![t.len()],
        });
    }
    for &ti in t {
        schedule.check_t(ti)?;
    }
    let (lo, hi) = x0.min_max();
    if lo < -1.0 || hi > 1.0 {
        warn!("forward_closed_form: x0 spans [{lo}, {hi}], outside [-1, 1]");
    }
    let eps = gaussian_like(x0.shape(), rng)?;
    let x_t = noise_with(x0, &eps, t, schedule);
    Ok(ForwardSample {
        x_t,
        eps,
        t: t.to_vec(),
    })
}

/// `sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps` with a given eps.
pub(crate) fn noise_with(
    x0: &ImageBatch,
    eps: &ImageBatch,
    t: &[usize],
    schedule: &NoiseSchedule,
) -> ImageBatch {
    let per = x0.item_len();
    let mut data = Vec::with_capacity(x0.data().len());
    for (i, &ti) in t.iter().enumerate() {
        let signal = schedule.sqrt_alpha_bar(ti) as f32;
        let noise = schedule.sqrt_one_minus_alpha_bar(ti) as f32;
        let xs = &x0.data()[i * per..(i + 1) * per];
        let es = &eps.data()[i * per..(i + 1) * per];
        data.extend(xs.iter().zip(es).map(|(&x, &e)| signal * x + noise * e));
    }
    ImageBatch::from_raw(x0.shape(), data)
}

/// Noise-free part of the reverse step: `(x_t - mean_eps * eps_hat) / sqrt(alpha_t)`.
pub fn reverse_mean(
    x_t: &ImageBatch,
    t: usize,
    eps_hat: &ImageBatch,
    schedule: &NoiseSchedule,
) -> Result<ImageBatch> {
    shape_check(x_t, eps_hat)?;
    let c = schedule.posterior_coefficients(t)?;
    let data = x_t
        .data()
        .iter()
        .zip(eps_hat.data())
        .map(|(&x, &e)| (c.mean_x * (f64::from(x) - c.mean_eps * f64::from(e))) as f32)
        .collect();
    Ok(ImageBatch::from_raw(x_t.shape(), data))
}

/// One ancestral step `x_t -> x_{t-1}`. No noise is added at `t = 1`.
pub fn reverse_step(
    x_t: &ImageBatch,
    t: usize,
    eps_hat: &ImageBatch,
    schedule: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<ImageBatch> {
    let mean = reverse_mean(x_t, t, eps_hat, schedule)?;
    let sigma = schedule.posterior_coefficients(t)?.sigma;
    if sigma == 0.0 {
        return Ok(mean);
    }
    let z = gaussian_like(x_t.shape(), rng)?;
    let data = mean
        .data()
        .iter()
        .zip(z.data())
        .map(|(&m, &n)| (f64::from(m) + sigma * f64::from(n)) as f32)
        .collect();
    Ok(ImageBatch::from_raw(x_t.shape(), data))
}

/// Runs the full reverse chain from `x_T ~ N(0, I)` and clamps the result to
/// `[-1, 1]`.
pub fn sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    shape: [usize; 4],
    schedule: &NoiseSchedule,
    rng: &mut RngState,
) -> Result<ImageBatch> {
    sample_with_observer(denoiser, shape, schedule, rng, |_, _| {})
}

/// Like [`sample`], calling `observe(t, x_{t-1})` after every reverse step.
/// Intermediate states are not clamped.
pub fn sample_with_observer<D, F>(
    denoiser: &D,
    shape: [usize; 4],
    schedule: &NoiseSchedule,
    rng: &mut RngState,
    mut observe: F,
) -> Result<ImageBatch>
where
    D: Denoiser + ?Sized,
    F: FnMut(usize, &ImageBatch),
{
    let mut x = gaussian_like(shape, rng)?;
    let n = shape[0];
    for t in (1..=schedule.steps()).rev() {
        let eps_hat = denoiser.predict(&x, &vec![t; n])?;
        if eps_hat.shape() != x.shape() {
            return Err(Error::ShapeMismatch {
                left: x.shape().to_vec(),
                right: eps_hat.shape().to_vec(),
            });
        }
        if !eps_hat.is_finite() {
            return Err(Error::Numeric {
                t,
                context: "denoiser output".into(),
            });
        }
        x = reverse_step(&x, t, &eps_hat, schedule, rng)?;
        if !x.is_finite() {
            return Err(Error::Numeric {
                t,
                context: "reverse step".into(),
            });
        }
        observe(t, &x);
    }
    Ok(x.clamp(-1.0, 1.0))
}
