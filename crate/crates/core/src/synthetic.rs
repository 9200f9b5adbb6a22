//! Procedural shape images for smoke tests and demos.

use std::fs;
use std::path::{Path, PathBuf};

use crate::batch::ImageBatch;
use crate::error::{Error, Result};
use crate::preprocess::{normalize_pixel, save_png, RawImage};
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Circle,
    Rectangle,
}

/// One bright filled shape on a dark background.
pub fn shape_image(size: usize, shape: Shape, rng: &mut RngState) -> RawImage {
    let bg = rng.int_inclusive(0, 40) as u8;
    let fg = rng.int_inclusive(180, 255) as u8;
    let mut px = vec![bg; size * size];
    let lo = size / 4;
    let hi = size - size / 4 - 1;
    match shape {
        Shape::Circle => {
            let cx = rng.int_inclusive(lo, hi) as f64 + 0.5;
            let cy = rng.int_inclusive(lo, hi) as f64 + 0.5;
            let r = rng.int_inclusive((size / 8).max(1), (size / 4).max(1)) as f64;
            for y in 0..size {
                for x in 0..size {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= r * r {
                        px[y * size + x] = fg;
                    }
                }
            }
        }
        Shape::Rectangle => {
            let x0 = rng.int_inclusive(0, lo);
            let y0 = rng.int_inclusive(0, lo);
            let x1 = rng.int_inclusive(hi, size - 1);
            let y1 = rng.int_inclusive(hi, size - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    px[y * size + x] = fg;
                }
            }
        }
    }
    RawImage::gray(size, size, px)
}

/// `count` images alternating circle and rectangle.
pub fn shapes(count: usize, size: usize, seed: u64) -> Result<Vec<RawImage>> {
    if !(8..=256).contains(&size) {
        return Err(Error::Config(format!(
            "synthetic image size {size} must be in 8..=256"
        )));
    }
    let mut rng = RngState::new(seed);
    Ok((0..count)
        .map(|i| {
            let kind = if i % 2 == 0 {
                Shape::Circle
            } else {
                Shape::Rectangle
            };
            shape_image(size, kind, &mut rng)
        })
        .collect())
}

/// Shapes as a `[-1, 1]` batch without touching the filesystem.
pub fn shapes_batch(count: usize, size: usize, seed: u64) -> Result<ImageBatch> {
    let data = shapes(count, size, seed)?
        .into_iter()
        .flat_map(|img| img.pixels.into_iter().map(normalize_pixel))
        .collect();
    ImageBatch::from_vec([count, 1, size, size], data)
}

/// Writes `shape_0000.png`, `shape_0001.png`, ... into `dir`.
pub fn write_shapes(dir: &Path, count: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let images = shapes(count, size, seed)?;
    fs::create_dir_all(dir)?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let path = dir.join(format!("shape_{i:04}.png"));
            save_png(img, &path)?;
            Ok(path)
        })
        .collect()
}
