//! Image ingestion: resize, center-crop, grayscale, scale to `[-1, 1]`, and
//! the inverse mapping back to 8-bit pixels.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use image::{GrayImage, ImageBuffer, ImageReader, Luma, Rgb, RgbImage};
use log::warn;

use crate::batch::ImageBatch;
use crate::error::{Error, Result};

/// Decoded 8-bit pixels, row-major, `channels` interleaved (1 or 3).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub pixels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub source: PathBuf,
}

impl RawImage {
    pub fn gray(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        Self {
            pixels,
            height,
            width,
            channels: 1,
            source: PathBuf::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |reason: String| Error::Decode {
            path: self.source.clone(),
            reason,
        };
        if self.height == 0 || self.width == 0 {
            return Err(err("empty image".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(err(format!("unsupported channel count {}", self.channels)));
        }
        if self.pixels.len() != self.height * self.width * self.channels {
            return Err(err("pixel buffer length does not match dimensions".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// `(height, width)` of the network input.
    pub target_size: [usize; 2],
    /// Share of the resized image kept by the center crop.
    pub crop_fraction: f64,
}

impl PipelineConfig {
    pub fn new(target_size: [usize; 2]) -> Self {
        Self {
            target_size,
            crop_fraction: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [h, w] = self.target_size;
        if h < 8 || w < 8 {
            return Err(Error::Config(format!("target size {h}x{w} is below 8x8")));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "crop fraction {} outside (0, 1]",
                self.crop_fraction
            )));
        }
        Ok(())
    }

    /// Size the image is resized to before cropping.
    pub fn resize_size(&self) -> [usize; 2] {
        self.target_size
            .map(|d| ((d as f64 / self.crop_fraction).round() as usize).max(d))
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new([32, 32])
    }
}

/// BT.601 luma, rounded half up.
fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    (y + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn normalize_pixel(v: u8) -> f32 {
    f32::from(v) / 127.5 - 1.0
}

/// Inverse of [`normalize_pixel`]: `round_half_up((x + 1) * 127.5)`, clamped.
pub fn denormalize_pixel(x: f32) -> u8 {
    ((f64::from(x) + 1.0) * 127.5 + 0.5)
        .floor()
        .clamp(0.0, 255.0) as u8
}

fn resize_crop<P>(img: &ImageBuffer<P, Vec<u8>>, cfg: &PipelineConfig) -> ImageBuffer<P, Vec<u8>>
where
    P: image::Pixel<Subpixel = u8> + 'static,
{
    let [rh, rw] = cfg.resize_size();
    let [th, tw] = cfg.target_size;
    let resized = imageops::resize(img, rw as u32, rh as u32, FilterType::Triangle);
    let (x0, y0) = ((rw - tw) / 2, (rh - th) / 2);
    imageops::crop_imm(&resized, x0 as u32, y0 as u32, tw as u32, th as u32).to_image()
}

/// Runs one image through the pipeline, producing a `(1, 1, h, w)` batch.
pub fn preprocess(img: &RawImage, cfg: &PipelineConfig) -> Result<ImageBatch> {
    cfg.validate()?;
    img.validate()?;
    let (w, h) = (img.width as u32, img.height as u32);
    let gray: Vec<u8> = if img.channels == 3 {
        let rgb: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, img.pixels.clone())
            .expect("validated buffer length");
        resize_crop(&rgb, cfg)
            .pixels()
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    } else {
        let g: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, img.pixels.clone())
            .expect("validated buffer length");
        resize_crop(&g, cfg).into_raw()
    };
    let [th, tw] = cfg.target_size;
    ImageBatch::from_vec(
        [1, 1, th, tw],
        gray.into_iter().map(normalize_pixel).collect(),
    )
}

/// Maps each single-channel item of a `[-1, 1]` batch back to 8-bit pixels.
pub fn denormalize(batch: &ImageBatch) -> Result<Vec<RawImage>> {
    let [n, c, h, w] = batch.shape();
    if c != 1 {
        return Err(Error::ShapeMismatch {
            left: batch.shape().to_vec(),
            right: vec![n, 1, h, w],
        });
    }
    let (lo, hi) = batch.min_max();
    if lo < -1.0 || hi > 1.0 {
        return Err(Error::Domain(format!(
            "values span [{lo}, {hi}], expected [-1, 1]"
        )));
    }
    Ok((0..n)
        .map(|i| {
            RawImage::gray(
                w,
                h,
                batch
                    .item(i)
                    .iter()
                    .map(|&x| denormalize_pixel(x))
                    .collect(),
            )
        })
        .collect())
}

/// Decodes an image file, keeping one channel for grayscale sources and
/// three otherwise (alpha is dropped).
pub fn decode_image(path: &Path) -> Result<RawImage> {
    let err = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let img = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (pixels, channels) = if img.color().has_color() {
        (img.to_rgb8().into_raw(), 3)
    } else {
        (img.to_luma8().into_raw(), 1)
    };
    let raw = RawImage {
        pixels,
        height: h,
        width: w,
        channels,
        source: path.to_path_buf(),
    };
    raw.validate()?;
    Ok(raw)
}

/// Writes a single-channel image as an 8-bit grayscale PNG.
pub fn save_png(img: &RawImage, path: &Path) -> Result<()> {
    img.validate()?;
    if img.channels != 1 {
        return Err(Error::Config("only grayscale images are written".into()));
    }
    let buf = GrayImage::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
        .expect("validated buffer length");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Regular files in `dir`, sorted by file name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Corpus(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Loads and preprocesses every decodable image in `dir` (lexicographic
/// order), stopping after `limit` images when given. Undecodable files are
/// skipped with a warning.
pub fn load_corpus(dir: &Path, cfg: &PipelineConfig, limit: Option<usize>) -> Result<ImageBatch> {
    cfg.validate()?;
    let files = corpus_files(dir)?;
    if files.is_empty() {
        return Err(Error::Corpus(format!(
            "{} contains no files",
            dir.display()
        )));
    }
    let cap = limit.unwrap_or(usize::MAX);
    let mut items = Vec::new();
    for path in files {
        if items.len() >= cap {
            break;
        }
        match decode_image(&path).and_then(|raw| preprocess(&raw, cfg)) {
            Ok(b) => items.push(b),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    if items.is_empty() {
        return Err(Error::Corpus(format!(
            "no decodable images in {}",
            dir.display()
        )));
    }
    ImageBatch::stack(&items)
}
