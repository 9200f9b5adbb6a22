//! Variance schedules and the coefficients derived from them.
//!
//! Timesteps are 1-based: `t = 1..=T`, with `alpha_bar(t) = prod_{s=1..t} (1 - beta_s)`.
//! Coefficients are kept in f64 and narrowed only when applied to pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serializable description of a schedule. Derived arrays are rebuilt from
/// this, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
}

impl ScheduleConfig {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        Self {
            kind: ScheduleKind::Linear,
            steps,
            beta_start,
            beta_end,
        }
    }

    /// T = 1000, beta linear from 1e-4 to 0.02.
    pub fn standard() -> Self {
        Self::linear(1000, 1e-4, 0.02)
    }

    /// T = 50 with the standard betas rescaled by 1000/50, so the chain still
    /// ends in (numerically) pure noise.
    pub fn desk() -> Self {
        Self::linear(50, 2e-3, 0.4)
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        match self.kind {
            ScheduleKind::Linear => linear_schedule(self.steps, self.beta_start, self.beta_end),
        }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self::standard()
    }
}

/// Precomputed forward-process coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    config: ScheduleConfig,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sqrt_alpha_bar: Vec<f64>,
    sqrt_one_minus_alpha_bar: Vec<f64>,
}

/// Reverse-step coefficients for the noise-predicting parameterization:
/// `x_{t-1} = mean_x * (x_t - mean_eps * eps_hat) + sigma * z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoefficients {
    pub mean_x: f64,
    pub mean_eps: f64,
    pub sigma: f64,
}

/// Linear beta schedule over `steps` steps.
pub fn linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    let in_range = |b: f64| b > 0.0 && b < 1.0;
    if !in_range(beta_start) || !in_range(beta_end) {
        return Err(Error::Config(format!(
            "betas must lie in (0, 1), got {beta_start} and {beta_end}"
        )));
    }
    if beta_start > beta_end {
        return Err(Error::Config(format!(
            "beta_start {beta_start} exceeds beta_end {beta_end}"
        )));
    }
    let beta: Vec<f64> = if steps == 1 {
        vec![beta_start]
    } else {
        let span = (steps - 1) as f64;
        (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / span)
            .collect()
    };
    Ok(NoiseSchedule::from_betas(
        ScheduleConfig::linear(steps, beta_start, beta_end),
        beta,
    ))
}

impl NoiseSchedule {
    fn from_betas(config: ScheduleConfig, beta: Vec<f64>) -> Self {
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let alpha_bar: Vec<f64> = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        let sqrt_alpha_bar = alpha_bar.iter().map(|a| a.sqrt()).collect();
        let sqrt_one_minus_alpha_bar = alpha_bar.iter().map(|a| (1.0 - a).sqrt()).collect();
        Self {
            config,
            beta,
            alpha,
            alpha_bar,
            sqrt_alpha_bar,
            sqrt_one_minus_alpha_bar,
        }
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Index {
                t,
                steps: self.steps(),
            });
        }
        Ok(())
    }

    // The accessors below take a 1-based t and panic outside 1..=T; callers
    // validate with `check_t` first.

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn sqrt_alpha_bar(&self, t: usize) -> f64 {
        self.sqrt_alpha_bar[t - 1]
    }

    pub fn sqrt_one_minus_alpha_bar(&self, t: usize) -> f64 {
        self.sqrt_one_minus_alpha_bar[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Coefficients of the reverse step at `t`. The variance is fixed to
    /// `beta_t`, and the final step (`t = 1`) is noiseless.
    pub fn posterior_coefficients(&self, t: usize) -> Result<PosteriorCoefficients> {
        self.check_t(t)?;
        let beta = self.beta(t);
        Ok(PosteriorCoefficients {
            mean_x: 1.0 / self.alpha(t).sqrt(),
            mean_eps: beta / self.sqrt_one_minus_alpha_bar(t),
            sigma: if t > 1 { beta.sqrt() } else { 0.0 },
        })
    }
}
