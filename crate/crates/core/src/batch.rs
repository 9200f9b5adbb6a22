//! The `(n, c, h, w)` image batch shared by every stage of the pipeline.

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Batch of images stored contiguously in `(n, c, h, w)` order.
///
/// Values are finite 32-bit floats. A batch is not mutated after construction;
/// operations return new batches.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    shape: [usize; 4],
    data: Vec<f32>,
}

fn check_shape(shape: [usize; 4]) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(())
}

impl ImageBatch {
    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        check_shape(shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::ShapeMismatch {
                left: shape.to_vec(),
                right: vec![data.len()],
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                t: 0,
                context: format!("element {i} of a new batch is {}", data[i]),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: [usize; 4], value: f32) -> Result<Self> {
        check_shape(shape)?;
        Self::from_vec(shape, vec![value; shape.iter().product()])
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    /// Builds a batch without the finiteness scan. Callers inside the crate
    /// use this when they check finiteness themselves.
    pub(crate) fn from_raw(shape: [usize; 4], data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape[0]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Pixels of item `i`.
    pub fn item(&self, i: usize) -> &[f32] {
        let len = self.item_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// New batch built from the listed items, in the listed order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.item_len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Index {
                    t: i,
                    steps: self.len(),
                });
            }
            data.extend_from_slice(self.item(i));
        }
        let [_, c, h, w] = self.shape;
        Self::from_vec([indices.len(), c, h, w], data)
    }

    /// Concatenates batches along the batch axis.
    pub fn stack(parts: &[ImageBatch]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidShape(vec![0]))?;
        let [_, c, h, w] = first.shape;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            let [pn, pc, ph, pw] = p.shape;
            if (pc, ph, pw) != (c, h, w) {
                return Err(Error::ShapeMismatch {
                    left: first.shape.to_vec(),
                    right: p.shape.to_vec(),
                });
            }
            n += pn;
            data.extend_from_slice(&p.data);
        }
        Ok(Self::from_raw([n, c, h, w], data))
    }

    /// Elementwise clamp into `[lo, hi]`.
    pub fn clamp(&self, lo: f32, hi: f32) -> Self {
        let data = self.data.iter().map(|v| v.clamp(lo, hi)).collect();
        Self::from_raw(self.shape, data)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Batch of i.i.d. standard-normal samples.
pub fn gaussian_like(shape: [usize; 4], rng: &mut RngState) -> Result<ImageBatch> {
    check_shape(shape)?;
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.normal()).collect();
    Ok(ImageBatch::from_raw(shape, data))
}

/// Mean squared elementwise difference, accumulated in f64.
pub fn batch_mse(a: &ImageBatch, b: &ImageBatch) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            left: a.shape.to_vec(),
            right: b.shape.to_vec(),
        });
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}
