//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits nonzero if any fails.
//!
//! `cargo test -p ddpm-cli --test acceptance`

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use ddpm_core::preprocess::{denormalize_pixel, normalize_pixel};
use ddpm_core::synthetic::{shape_image, shapes_batch, Shape};
use ddpm_core::train::BEST_CHECKPOINT;
use ddpm_core::{
    checkpoint_load, evaluate_pair, forward_closed_form, forward_step, gaussian_like,
    linear_oracle_denoiser, linear_schedule, preprocess, reverse_mean, sample, ssim, train,
    Denoiser, ImageBatch, PairingStrategy, PipelineConfig, RawImage, RngState, ScheduleConfig,
    SsimWeights, TrainConfig, UNet, UNetConfig,
};
use ndarray::Array2;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s as f64, || {
        format!(
            "{what} took {:.1}s, limit {limit_s}s",
            elapsed.as_secs_f64()
        )
    })
}

// 1 ------------------------------------------------------------------------

fn pixel_moments(batch: &ImageBatch) -> Vec<(f64, f64)> {
    let n = batch.len() as f64;
    let per = batch.item_len();
    let (mut sum, mut sq) = (vec![0.0f64; per], vec![0.0f64; per]);
    for i in 0..batch.len() {
        for (j, &v) in batch.item(i).iter().enumerate() {
            let v = f64::from(v);
            sum[j] += v;
            sq[j] += v * v;
        }
    }
    sum.iter()
        .zip(&sq)
        .map(|(s, q)| {
            let m = s / n;
            (m, (q - n * m * m) / (n - 1.0))
        })
        .collect()
}

fn forward_oracle() -> Outcome {
    // Sampling error of a per-pixel variance ratio is about sqrt(4 / trials);
    // 10^6 trials keeps it near 0.2%, well inside the 1% tolerance.
    const TRIALS: usize = 1_000_000;
    let started = Instant::now();
    let s = linear_schedule(10, 1e-4, 0.02).map_err(|e| e.to_string())?;
    let x0: Vec<f32> = (0..16)
        .map(|i| (0.5 + 0.5 * i as f32 / 15.0) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let data: Vec<f32> = (0..TRIALS).flat_map(|_| x0.iter().copied()).collect();
    let batch = ImageBatch::from_vec([TRIALS, 1, 4, 4], data).unwrap();
    let root = RngState::new(2024);
    let closed = forward_closed_form(&batch, &vec![10; TRIALS], &s, &mut root.split(0)).unwrap();
    let mut x = batch;
    let mut rng = root.split(1);
    for t in 1..=10 {
        x = forward_step(&x, t, &s, &mut rng).unwrap();
    }
    let (a, b) = (pixel_moments(&closed.x_t), pixel_moments(&x));
    let rel = |p: f64, q: f64| (p - q).abs() / q.abs();
    let mean_err = a
        .iter()
        .zip(&b)
        .map(|(p, q)| rel(p.0, q.0))
        .fold(0.0, f64::max);
    let var_err = a
        .iter()
        .zip(&b)
        .map(|(p, q)| rel(p.1, q.1))
        .fold(0.0, f64::max);
    let elapsed = started.elapsed();
    ensure(mean_err < 0.01, || format!("mean rel err {mean_err:.4}"))?;
    ensure(var_err < 0.01, || format!("variance rel err {var_err:.4}"))?;
    within(elapsed, 30, "oracle")?;
    Ok(format!(
        "{TRIALS} trials, worst mean rel err {mean_err:.2e}, worst var rel err {var_err:.2e}, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// 2 ------------------------------------------------------------------------

fn coefficient_identities() -> Outcome {
    let s = ScheduleConfig::standard()
        .build()
        .map_err(|e| e.to_string())?;
    let mut product = 1.0f64;
    let (mut unit_err, mut prod_err) = (0.0f64, 0.0f64);
    for t in 1..=s.steps() {
        product *= 1.0 - s.beta(t);
        unit_err = unit_err
            .max((s.sqrt_alpha_bar(t).powi(2) + s.sqrt_one_minus_alpha_bar(t).powi(2) - 1.0).abs());
        prod_err = prod_err.max((s.alpha_bar(t) - product).abs() / product);
    }
    ensure(s.steps() == 1000, || {
        "default schedule is not T = 1000".into()
    })?;
    ensure(unit_err < 1e-5, || {
        format!("unit identity off by {unit_err:e}")
    })?;
    ensure(prod_err < 1e-6, || {
        format!("cumulative product rel err {prod_err:e}")
    })?;
    Ok(format!(
        "T=1000, unit identity err {unit_err:.1e}, product rel err {prod_err:.1e}"
    ))
}

// 3 ------------------------------------------------------------------------

fn target_image(side: usize) -> ImageBatch {
    let data = (0..side * side)
        .map(|i| ((i * 37 % 17) as f32 / 8.0 - 1.0).clamp(-0.95, 0.95))
        .collect();
    ImageBatch::from_vec([1, 1, side, side], data).unwrap()
}

fn round_trip() -> Outcome {
    let mut details = Vec::new();
    for config in [
        ScheduleConfig::linear(50, 1e-4, 0.02),
        ScheduleConfig::desk(),
    ] {
        let s = config.build().map_err(|e| e.to_string())?;
        let x0 = target_image(8);
        let fwd = forward_closed_form(&x0, &[50], &s, &mut RngState::new(17)).unwrap();
        // The exact noise of each iterate; at t = T it equals the stored draw.
        let oracle = linear_oracle_denoiser(&x0, &s);
        let mut x = fwd.x_t;
        for t in (1..=50).rev() {
            let eps = oracle.predict(&x, &[t]).unwrap();
            x = reverse_mean(&x, t, &eps, &s).unwrap();
        }
        let err = x
            .data()
            .iter()
            .zip(x0.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        ensure(err < 1e-3, || {
            format!(
                "beta {}..{}: max abs err {err:e}",
                config.beta_start, config.beta_end
            )
        })?;
        details.push(format!(
            "beta {}..{} err {err:.1e}",
            config.beta_start, config.beta_end
        ));
    }
    Ok(format!("T=50, sigma=0: {}", details.join("; ")))
}

// 4 ------------------------------------------------------------------------

fn oracle_sampling() -> Outcome {
    let s = ScheduleConfig::desk().build().map_err(|e| e.to_string())?;
    let v = target_image(8);
    let oracle = linear_oracle_denoiser(&v, &s);
    let out =
        sample(&oracle, [64, 1, 8, 8], &s, &mut RngState::new(4)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for j in 0..v.item_len() {
        let mean = (0..64).map(|i| f64::from(out.item(i)[j])).sum::<f64>() / 64.0;
        worst = worst.max((mean - f64::from(v.data()[j])).abs());
    }
    ensure(worst < 0.15, || {
        format!("worst per-pixel deviation {worst}")
    })?;
    Ok(format!(
        "T=50, 64 samples, worst per-pixel |mean - v| {worst:.1e}"
    ))
}

// 5 ------------------------------------------------------------------------

fn gradient_check() -> Outcome {
    const STEP: f64 = 1e-3;
    const ABS_FLOOR: f64 = 1e-7;
    let started = Instant::now();
    let config = UNetConfig::toy();
    ensure(
        config.image_size == [8, 8] && config.base_width == 8,
        || "toy preset changed".into(),
    )?;
    let net = UNet::new(config).unwrap();
    let mut params = net.init(&mut RngState::new(21));
    let mut rng = RngState::new(22);
    for t in params.tensors_mut() {
        // the zero-initialized output layer would mask every upstream gradient
        if t.name.starts_with("out.conv") {
            t.data.iter_mut().for_each(|v| *v = rng.symmetric(0.5));
        }
    }
    let base: Vec<Vec<f64>> = params
        .iter()
        .map(|t| t.data.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let shape = [2, 1, 8, 8];
    let as64 = |b: ImageBatch| b.data().iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
    let x = as64(gaussian_like(shape, &mut RngState::new(5)).unwrap());
    let y = as64(gaussian_like(shape, &mut RngState::new(6)).unwrap());
    let t = [7usize, 33];
    let analytic = net.loss_and_grad_with(base.clone(), shape, x.clone(), &t, &y);

    let mut pick = RngState::new(99);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let flat = pick.int_inclusive(0, params.scalar_count() - 1);
        let owner = params.scalar_owner(flat).to_string();
        let (mut i, mut j) = (0, flat);
        while j >= base[i].len() {
            j -= base[i].len();
            i += 1;
        }
        let mut plus = base.clone();
        plus[i][j] += STEP;
        let mut minus = base.clone();
        minus[i][j] -= STEP;
        let lp = net.loss_and_grad_with(plus, shape, x.clone(), &t, &y).loss;
        let lm = net.loss_and_grad_with(minus, shape, x.clone(), &t, &y).loss;
        let numeric = (lp - lm) / (2.0 * STEP);
        let a = analytic.grads[i][j];
        let scale = a.abs().max(numeric.abs());
        let diff = (a - numeric).abs();
        if scale < ABS_FLOOR {
            ensure(diff <= ABS_FLOOR, || {
                format!("{owner}: {a:e} vs {numeric:e}")
            })?;
            continue;
        }
        worst = worst.max(diff / scale);
        ensure(diff / scale <= 1e-2, || {
            format!("{owner}[{j}]: {a:e} vs {numeric:e}")
        })?;
    }
    let elapsed = started.elapsed();
    within(elapsed, 60, "gradient check")?;
    Ok(format!(
        "50 parameters, worst rel err {worst:.1e}, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// 6 ------------------------------------------------------------------------

fn smoke_config(dir: &Path, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        learning_rate: 1e-3,
        batch_size: 2,
        seed: 0,
        schedule: ScheduleConfig::desk(),
        unet: UNetConfig::toy(),
        checkpoint_dir: dir.to_path_buf(),
    }
}

fn smoke_training() -> Outcome {
    let corpus = shapes_batch(16, 8, 0).map_err(|e| e.to_string())?;
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let started = Instant::now();
        let (_, records) = train(&smoke_config(dir.path(), 200), &corpus).unwrap();
        (
            records.iter().map(|r| r.mean_loss).collect::<Vec<f64>>(),
            started.elapsed(),
        )
    };
    let (losses, elapsed) = run();
    let below = losses.iter().position(|&l| l < 0.5);
    ensure(below.is_some(), || "epoch loss never fell below 0.5".into())?;
    ensure(losses[9] < 0.5 * losses[0], || {
        format!(
            "loss(10) = {:.4} not below half of loss(1) = {:.4}",
            losses[9], losses[0]
        )
    })?;
    within(elapsed, 300, "training")?;
    let (again, _) = run();
    ensure(
        losses
            .iter()
            .map(|v| v.to_bits())
            .eq(again.iter().map(|v| v.to_bits())),
        || "two runs with the same seed differ".into(),
    )?;
    Ok(format!(
        "16 shapes 8x8, T=50: loss(1) {:.3}, loss(10) {:.3}, first < 0.5 at epoch {}, final {:.3}; {:.1}s; rerun identical",
        losses[0],
        losses[9],
        below.unwrap() + 1,
        losses[losses.len() - 1],
        elapsed.as_secs_f64()
    ))
}

// 7 ------------------------------------------------------------------------

fn ssim_suite() -> Outcome {
    let w = SsimWeights::default();
    let mut rng = RngState::new(77);
    let mut random =
        |h: usize, w: usize| Array2::from_shape_fn((h, w), |_| (rng.uniform() * 255.0).floor());
    let (mut self_err, mut sym_err, mut lo, mut hi) =
        (0.0f64, 0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..1000 {
        let side = 2 + k % 15;
        let x = random(side, side);
        let y = if k % 5 == 0 {
            x.mapv(|v| 255.0 - v)
        } else {
            random(side, side)
        };
        let xy = ssim(x.view(), y.view(), w, 255.0)
            .map_err(|e| e.to_string())?
            .ssim;
        let yx = ssim(y.view(), x.view(), w, 255.0)
            .map_err(|e| e.to_string())?
            .ssim;
        let xx = ssim(x.view(), x.view(), w, 255.0)
            .map_err(|e| e.to_string())?
            .ssim;
        self_err = self_err.max((xx - 1.0).abs());
        sym_err = sym_err.max((xy - yx).abs());
        lo = lo.min(xy);
        hi = hi.max(xy);
    }
    ensure(self_err <= 1e-9, || {
        format!("ssim(x, x) off by {self_err:e}")
    })?;
    ensure(sym_err <= 1e-12, || format!("asymmetry {sym_err:e}"))?;
    ensure(lo >= -1.0 && hi <= 1.0, || format!("range [{lo}, {hi}]"))?;
    let x = Array2::from_shape_vec((2, 2), vec![0.0, 0.0, 255.0, 255.0]).unwrap();
    let y = Array2::from_shape_vec((2, 2), vec![255.0, 255.0, 0.0, 0.0]).unwrap();
    let golden = -19973.0 / 20027.0;
    let got = ssim(x.view(), y.view(), w, 255.0).unwrap().ssim;
    ensure((got - golden).abs() <= 1e-9, || {
        format!("2x2 case {got} vs {golden}")
    })?;
    Ok(format!(
        "1000 pairs in [{lo:.3}, {hi:.3}], self err {self_err:.1e}, symmetry err {sym_err:.1e}, 2x2 golden {got:.12}"
    ))
}

// 8 ------------------------------------------------------------------------

fn preprocessing() -> Outcome {
    for v in 0..=255u8 {
        let x = normalize_pixel(v);
        ensure((-1.0..=1.0).contains(&x), || format!("{v} maps to {x}"))?;
        ensure(denormalize_pixel(x) == v, || {
            format!("{v} round-trips to {}", denormalize_pixel(x))
        })?;
    }
    let mut rng = RngState::new(8);
    let cfg = PipelineConfig::new([16, 16]);
    for k in 0..200 {
        let (w, h, c) = (
            1 + rng.int_inclusive(0, 63),
            1 + rng.int_inclusive(0, 63),
            if k % 2 == 0 { 1 } else { 3 },
        );
        let pixels = (0..w * h * c)
            .map(|_| rng.int_inclusive(0, 255) as u8)
            .collect();
        let img = RawImage {
            pixels,
            height: h,
            width: w,
            channels: c,
            source: Default::default(),
        };
        let out = preprocess(&img, &cfg).map_err(|e| e.to_string())?;
        let (lo, hi) = out.min_max();
        ensure(lo >= -1.0 && hi <= 1.0, || {
            format!("{w}x{h}x{c} produced [{lo}, {hi}]")
        })?;
    }
    Ok("256/256 byte values round-trip exactly; 200 random images stay in [-1, 1]".into())
}

// 9 ------------------------------------------------------------------------

fn checkpoint() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = shapes_batch(4, 8, 1).map_err(|e| e.to_string())?;
    let (best, _) = train(&smoke_config(dir.path(), 3), &corpus).map_err(|e| e.to_string())?;
    let path = dir.path().join(BEST_CHECKPOINT);
    let first = fs::read(&path).map_err(|e| e.to_string())?;
    let loaded = checkpoint_load(&path).map_err(|e| e.to_string())?;
    let again = dir.path().join("again.ckpt");
    loaded.save(&again).map_err(|e| e.to_string())?;
    ensure(fs::read(&again).unwrap() == first, || {
        "save -> load -> save changed bytes".into()
    })?;

    let s = best.schedule.build().unwrap();
    let bits = |d: &dyn Denoiser| -> Vec<u32> {
        sample(d, [4, 1, 8, 8], &s, &mut RngState::new(12))
            .unwrap()
            .data()
            .iter()
            .map(|v| v.to_bits())
            .collect()
    };
    let before = bits(&best.denoiser().unwrap());
    let after = bits(&loaded.denoiser().unwrap());
    ensure(before == after, || "sampling after load differs".into())?;
    Ok(format!(
        "{} bytes round-trip bitwise; post-load samples identical",
        first.len()
    ))
}

// 10 -----------------------------------------------------------------------

fn corpus_of(images: Vec<RawImage>) -> ImageBatch {
    let n = images.len();
    let side = images[0].width;
    let data = images
        .into_iter()
        .flat_map(|i| i.pixels.into_iter().map(normalize_pixel))
        .collect();
    ImageBatch::from_vec([n, 1, side, side], data).unwrap()
}

fn table_ordering() -> Outcome {
    let mut rng = RngState::new(31);
    let a: Vec<RawImage> = (0..24)
        .map(|_| shape_image(16, Shape::Circle, &mut rng))
        .collect();
    let b: Vec<RawImage> = a
        .iter()
        .map(|img| RawImage {
            pixels: img
                .pixels
                .iter()
                .map(|&p| (i32::from(p) + rng.int_inclusive(0, 16) as i32 - 8).clamp(0, 255) as u8)
                .collect(),
            ..img.clone()
        })
        .collect();
    let c: Vec<RawImage> = (0..24)
        .map(|_| shape_image(16, Shape::Rectangle, &mut rng))
        .collect();
    let (a, b, c) = (corpus_of(a), corpus_of(b), corpus_of(c));
    let ab = evaluate_pair(&a, &b, ("A", "B"), PairingStrategy::Random, 256, 7)
        .map_err(|e| e.to_string())?;
    let ac = evaluate_pair(&a, &c, ("A", "C"), PairingStrategy::Random, 256, 7)
        .map_err(|e| e.to_string())?;
    ensure(ab.mean_mse < ac.mean_mse, || {
        format!("MSE {} !< {}", ab.mean_mse, ac.mean_mse)
    })?;
    ensure(ab.mean_ssim > ac.mean_ssim, || {
        format!("SSIM {} !> {}", ab.mean_ssim, ac.mean_ssim)
    })?;
    Ok(format!(
        "similar MSE {:.2} < dissimilar {:.2}; similar SSIM {:.3} > dissimilar {:.3}",
        ab.mean_mse, ac.mean_mse, ab.mean_ssim, ac.mean_ssim
    ))
}

// 11 -----------------------------------------------------------------------

fn ddpm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddpm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn expect_code(dir: &Path, args: &[&str], code: i32) -> Result<(), String> {
    let out = ddpm(dir, args);
    ensure(out.status.code() == Some(code), || {
        format!(
            "{args:?} exited {:?}, expected {code}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for n in names {
        let (x, y) = (fs::read(a.join(n)), fs::read(b.join(n)));
        ensure(matches!((&x, &y), (Ok(p), Ok(q)) if p == q), || {
            format!("{n} differs between reruns")
        })?;
    }
    Ok(())
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    expect_code(
        d,
        &[
            "synth", "--out", "data", "--count", "16", "--size", "8", "--seed", "1",
        ],
        0,
    )?;
    expect_code(
        d,
        &[
            "synth", "--out", "other", "--count", "16", "--size", "8", "--seed", "2",
        ],
        0,
    )?;
    // Identical relative paths from two working directories, so even the
    // manifests must match byte for byte.
    for wd in ["w1", "w2"] {
        fs::create_dir(d.join(wd)).map_err(|e| e.to_string())?;
        expect_code(
            &d.join(wd),
            &[
                "train",
                "--data",
                "../data",
                "--out",
                "run",
                "--preset",
                "toy",
                "--epochs",
                "4",
                "--batch-size",
                "4",
                "--seed",
                "3",
            ],
            0,
        )?;
    }
    same_files(
        &d.join("w1/run"),
        &d.join("w2/run"),
        &[
            "epochs.jsonl",
            "checkpoints/best.ckpt",
            "loss.png",
            "manifest.json",
        ],
    )?;
    let ckpt = d.join("w1/run/checkpoints/best.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    for out in ["s1", "s2"] {
        expect_code(
            d,
            &[
                "sample",
                "--checkpoint",
                ckpt,
                "--count",
                "4",
                "--seed",
                "9",
                "--out",
                out,
            ],
            0,
        )?;
    }
    same_files(
        &d.join("s1"),
        &d.join("s2"),
        &[
            "sample_0000.png",
            "sample_0003.png",
            "grid.png",
            "manifest.json",
        ],
    )?;
    for out in ["e1.json", "e2.json"] {
        expect_code(
            d,
            &[
                "evaluate",
                "--class-a",
                "data",
                "--class-b",
                "other",
                "--pairs",
                "32",
                "--seed",
                "4",
                "--image-size",
                "8",
                "--out",
                out,
            ],
            0,
        )?;
    }
    ensure(
        fs::read(d.join("e1.json")).ok() == fs::read(d.join("e2.json")).ok(),
        || "evaluate differs".into(),
    )?;
    for out in ["n1.png", "n2.png"] {
        expect_code(
            d,
            &[
                "noise-demo",
                "--data",
                "data",
                "--image-size",
                "8",
                "--seed",
                "5",
                "--out",
                out,
            ],
            0,
        )?;
    }
    ensure(
        fs::read(d.join("n1.png")).ok() == fs::read(d.join("n2.png")).ok(),
        || "noise-demo differs".into(),
    )?;

    expect_code(d, &["train", "--data", "missing", "--out", "bad"], 2)?;
    expect_code(
        d,
        &[
            "noise-demo",
            "--data",
            "data",
            "--fractions",
            "0",
            "--out",
            "bad.png",
        ],
        2,
    )?;
    expect_code(d, &["sample", "--checkpoint", "e1.json", "--out", "bad"], 2)?;
    ensure(
        !d.join("bad").exists() && !d.join("bad.png").exists(),
        || "failed command wrote output".into(),
    )?;
    expect_code(
        d,
        &[
            "train", "--data", "data", "--out", "boom", "--preset", "toy", "--epochs", "3", "--lr",
            "1e30",
        ],
        3,
    )?;
    Ok("train/sample/evaluate/noise-demo byte-identical under --seed; exit codes 0/2/3 as documented".into())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("forward-process oracle", forward_oracle),
        ("coefficient identities", coefficient_identities),
        ("round-trip denoising oracle", round_trip),
        ("linear-oracle sampling", oracle_sampling),
        ("gradient check", gradient_check),
        ("smoke training", smoke_training),
        ("SSIM suite", ssim_suite),
        ("preprocessing", preprocessing),
        ("checkpoint", checkpoint),
        ("evaluation ordering", table_ordering),
        ("CLI determinism and exit codes", cli_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
