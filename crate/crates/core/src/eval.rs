//! Corpus comparison by pixel MSE and single-window SSIM.
//!
//! SSIM here is computed once over the whole image:
//!
//! ```text
//! l = (2 mu_x mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
//! c = (2 sigma_x sigma_y + C2) / (sigma_x^2 + sigma_y^2 + C2)
//! s = (sigma_xy + C3) / (sigma_x sigma_y + C3)
//! ssim = l^alpha * c^beta * s^gamma
//! ```
//!
//! with `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`, `C3 = C2 / 2`, and sample
//! (N - 1) normalization for the standard deviations and covariance.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::batch::ImageBatch;
use crate::error::{Error, Result};
use crate::preprocess::denormalize_pixel;
use crate::rng::RngState;

pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const DEFAULT_DYNAMIC_RANGE: f64 = 255.0;
pub const DEFAULT_PAIRS: usize = 256;

/// Mean pixel value.
pub fn luminance_mean(img: ArrayView2<f64>) -> Result<f64> {
    if img.is_empty() {
        return Err(Error::InvalidShape(img.shape().to_vec()));
    }
    Ok(img.iter().sum::<f64>() / img.len() as f64)
}

/// Sample standard deviation, `sqrt(sum (x - mu)^2 / (N - 1))`.
pub fn contrast_std(img: ArrayView2<f64>) -> Result<f64> {
    if img.len() < 2 {
        return Err(Error::InvalidShape(img.shape().to_vec()));
    }
    let mu = luminance_mean(img)?;
    let ss: f64 = img.iter().map(|v| (v - mu) * (v - mu)).sum();
    Ok((ss / (img.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SsimWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimComponents {
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
    pub ssim: f64,
    pub weights: SsimWeights,
}

/// Sign-preserving power, so negative structure terms keep their sign under
/// fractional exponents.
fn spow(v: f64, e: f64) -> f64 {
    if e == 1.0 {
        v
    } else {
        v.signum() * v.abs().powf(e)
    }
}

pub fn ssim(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    weights: SsimWeights,
    dynamic_range: f64,
) -> Result<SsimComponents> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            left: x.shape().to_vec(),
            right: y.shape().to_vec(),
        });
    }
    if dynamic_range.is_nan() || dynamic_range <= 0.0 {
        return Err(Error::Config(format!(
            "dynamic range {dynamic_range} must be positive"
        )));
    }
    let c1 = (K1 * dynamic_range).powi(2);
    let c2 = (K2 * dynamic_range).powi(2);
    let c3 = c2 / 2.0;

    let (mx, my) = (luminance_mean(x)?, luminance_mean(y)?);
    let (sx, sy) = (contrast_std(x)?, contrast_std(y)?);
    let cov = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (x.len() - 1) as f64;

    let luminance = (2.0 * (mx * my) + c1) / (mx * mx + my * my + c1);
    let contrast = (2.0 * (sx * sy) + c2) / (sx * sx + sy * sy + c2);
    let structure = (cov + c3) / (sx * sy + c3);
    let ssim = spow(luminance, weights.alpha)
        * spow(contrast, weights.beta)
        * spow(structure, weights.gamma);
    Ok(SsimComponents {
        luminance,
        contrast,
        structure,
        ssim,
        weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingStrategy {
    /// Item `i` of one corpus against item `i` of the other.
    Aligned,
    /// Independent uniform picks from each corpus.
    Random,
}

impl fmt::Display for PairingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Aligned => "aligned",
            Self::Random => "random",
        })
    }
}

impl std::str::FromStr for PairingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(Self::Aligned),
            "random" => Ok(Self::Random),
            other => Err(Error::Config(format!("unknown pairing strategy {other:?}"))),
        }
    }
}

/// One row of the evaluation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_a: String,
    pub class_b: String,
    pub strategy: PairingStrategy,
    pub n_pairs: usize,
    pub mean_mse: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn table_header() -> String {
        format!(
            "{:<28} {:<28} {:>10} {:>8}",
            "Class 1", "Class 2", "MSE", "SSIM"
        )
    }

    pub fn table_row(&self) -> String {
        format!(
            "{:<28} {:<28} {:>10.2} {:>8.2}",
            self.class_a, self.class_b, self.mean_mse, self.mean_ssim
        )
    }
}

/// Formats reports as an aligned text table.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = EvalReport::table_header();
    for r in reports {
        out.push('\n');
        out.push_str(&r.table_row());
    }
    out
}

/// Item `i` of a `[-1, 1]` batch as 8-bit pixel values.
fn to_pixels(batch: &ImageBatch, i: usize) -> Array2<f64> {
    let [_, c, h, w] = batch.shape();
    let data = batch
        .item(i)
        .iter()
        .map(|&x| f64::from(denormalize_pixel(x)))
        .collect();
    Array2::from_shape_vec((c * h, w), data).expect("item length matches shape")
}

fn pixel_mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / a.len() as f64
}

/// Compares two corpora of `[-1, 1]` images in the 8-bit pixel domain.
pub fn evaluate_pair(
    corpus_a: &ImageBatch,
    corpus_b: &ImageBatch,
    labels: (&str, &str),
    strategy: PairingStrategy,
    n_pairs: usize,
    seed: u64,
) -> Result<EvalReport> {
    if corpus_a.is_empty() || corpus_b.is_empty() {
        return Err(Error::Corpus("both corpora must be nonempty".into()));
    }
    let [_, ca, ha, wa] = corpus_a.shape();
    let [_, cb, hb, wb] = corpus_b.shape();
    if (ca, ha, wa) != (cb, hb, wb) {
        return Err(Error::ShapeMismatch {
            left: corpus_a.shape().to_vec(),
            right: corpus_b.shape().to_vec(),
        });
    }
    for b in [corpus_a, corpus_b] {
        let (lo, hi) = b.min_max();
        if lo < -1.0 || hi > 1.0 {
            return Err(Error::Domain(format!("corpus values span [{lo}, {hi}]")));
        }
    }
    let pairs: Vec<(usize, usize)> = match strategy {
        PairingStrategy::Aligned => {
            if corpus_a.len() != corpus_b.len() {
                return Err(Error::Corpus(format!(
                    "aligned pairing needs equal corpus sizes, got {} and {}",
                    corpus_a.len(),
                    corpus_b.len()
                )));
            }
            (0..corpus_a.len()).map(|i| (i, i)).collect()
        }
        PairingStrategy::Random => {
            if n_pairs == 0 {
                return Err(Error::Config(
                    "random pairing needs at least one pair".into(),
                ));
            }
            let mut rng = RngState::new(seed);
            (0..n_pairs)
                .map(|_| {
                    let i = rng.int_inclusive(0, corpus_a.len() - 1);
                    let j = rng.int_inclusive(0, corpus_b.len() - 1);
                    (i, j)
                })
                .collect()
        }
    };
    let mut mse_sum = 0.0;
    let mut ssim_sum = 0.0;
    for &(i, j) in &pairs {
        let a = to_pixels(corpus_a, i);
        let b = to_pixels(corpus_b, j);
        mse_sum += pixel_mse(&a, &b);
        ssim_sum += ssim(
            a.view(),
            b.view(),
            SsimWeights::default(),
            DEFAULT_DYNAMIC_RANGE,
        )?
        .ssim;
    }
    let n = pairs.len() as f64;
    Ok(EvalReport {
        class_a: labels.0.to_string(),
        class_b: labels.1.to_string(),
        strategy,
        n_pairs: pairs.len(),
        mean_mse: mse_sum / n,
        mean_ssim: ssim_sum / n,
    })
}
