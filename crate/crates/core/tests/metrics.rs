//! SSIM, MSE and preprocessing properties.

use ddpm_core::preprocess::{denormalize_pixel, normalize_pixel};
use ddpm_core::synthetic::{shape_image, Shape};
use ddpm_core::{
    contrast_std, denormalize, evaluate_pair, preprocess, ssim, ImageBatch, PairingStrategy,
    PipelineConfig, RawImage, RngState, SsimWeights,
};
use ndarray::Array2;
use proptest::prelude::*;

fn pixels(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=255.0, len)
}

fn grid(h: usize, w: usize, v: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec((h, w), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ssim_bounded_symmetric_reflexive(a in pixels(36), b in pixels(36)) {
        let x = grid(6, 6, a);
        let y = grid(6, 6, b);
        let w = SsimWeights::default();
        let xy = ssim(x.view(), y.view(), w, 255.0).unwrap();
        let yx = ssim(y.view(), x.view(), w, 255.0).unwrap();
        prop_assert!((-1.0..=1.0).contains(&xy.ssim), "{}", xy.ssim);
        prop_assert!((xy.ssim - yx.ssim).abs() <= 1e-12);
        let xx = ssim(x.view(), x.view(), w, 255.0).unwrap();
        prop_assert!((xx.ssim - 1.0).abs() <= 1e-9);
        let product = xy.luminance * xy.contrast * xy.structure;
        prop_assert!((xy.ssim - product).abs() <= 1e-9);
    }
}

proptest! {
    #[test]
    fn contrast_matches_two_pass_variance(v in prop::collection::vec(-1e3f64..1e3, 2..64)) {
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let got = contrast_std(grid(1, n, v).view()).unwrap();
        prop_assert!((got - var.sqrt()).abs() <= 1e-6 * var.sqrt().max(1e-12));
    }

    #[test]
    fn luminance_ignores_pixel_order(mut v in pixels(20), seed in any::<u64>()) {
        let a = ddpm_core::luminance_mean(grid(4, 5, v.clone()).view()).unwrap();
        RngState::new(seed).shuffle(&mut v);
        let b = ddpm_core::luminance_mean(grid(4, 5, v).view()).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn pipeline_output_in_unit_range(
        w in 1usize..40,
        h in 1usize..40,
        color in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let channels = if color { 3 } else { 1 };
        let mut rng = RngState::new(seed);
        let px = (0..w * h * channels).map(|_| rng.int_inclusive(0, 255) as u8).collect();
        let img = RawImage { pixels: px, height: h, width: w, channels, source: Default::default() };
        let out = preprocess(&img, &PipelineConfig::new([8, 8])).unwrap();
        prop_assert_eq!(out.shape(), [1, 1, 8, 8]);
        let (lo, hi) = out.min_max();
        prop_assert!(lo >= -1.0 && hi <= 1.0);
    }
}

#[test]
fn every_byte_round_trips() {
    for v in 0..=255u8 {
        let x = normalize_pixel(v);
        assert!((-1.0..=1.0).contains(&x));
        assert_eq!(denormalize_pixel(x), v);
    }
    let all: Vec<f32> = (0..=255u8).map(normalize_pixel).collect();
    let batch = ImageBatch::from_vec([1, 1, 16, 16], all).unwrap();
    let back = denormalize(&batch).unwrap();
    assert_eq!(back[0].pixels, (0..=255u8).collect::<Vec<_>>());
}

fn corpus(images: Vec<RawImage>) -> ImageBatch {
    let n = images.len();
    let side = images[0].width;
    let data = images
        .into_iter()
        .flat_map(|i| i.pixels.into_iter().map(normalize_pixel))
        .collect();
    ImageBatch::from_vec([n, 1, side, side], data).unwrap()
}

fn jitter(img: &RawImage, rng: &mut RngState) -> RawImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&p| (i32::from(p) + rng.int_inclusive(0, 16) as i32 - 8).clamp(0, 255) as u8)
        .collect();
    RawImage {
        pixels,
        ..img.clone()
    }
}

/// A: circles. B: the same circles with mild pixel jitter. C: rectangles.
#[test]
fn similar_pair_beats_dissimilar_pair() {
    let mut rng = RngState::new(31);
    let a: Vec<RawImage> = (0..24)
        .map(|_| shape_image(16, Shape::Circle, &mut rng))
        .collect();
    let b: Vec<RawImage> = a.iter().map(|i| jitter(i, &mut rng)).collect();
    let c: Vec<RawImage> = (0..24)
        .map(|_| shape_image(16, Shape::Rectangle, &mut rng))
        .collect();
    let (a, b, c) = (corpus(a), corpus(b), corpus(c));
    for strategy in [PairingStrategy::Aligned, PairingStrategy::Random] {
        let ab = evaluate_pair(&a, &b, ("A", "B"), strategy, 256, 7).unwrap();
        let ac = evaluate_pair(&a, &c, ("A", "C"), strategy, 256, 7).unwrap();
        assert!(ab.mean_mse < ac.mean_mse, "{ab:?} {ac:?}");
        assert!(ab.mean_ssim > ac.mean_ssim, "{ab:?} {ac:?}");
    }
}
