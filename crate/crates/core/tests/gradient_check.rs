//! Central finite differences against the hand-written backward pass.
//!
//! The network runs in f64 here so the difference quotient is not swamped by
//! f32 rounding; the f32 training path is then compared to the f64 gradients.

use ddpm_core::{gaussian_like, ParameterSet, RngState, UNet, UNetConfig};

const STEP: f64 = 1e-3;
const REL_TOL: f64 = 1e-2;
// Gradients below this are compared absolutely; relative error is meaningless there.
const ABS_FLOOR: f64 = 1e-7;

fn randomized_params(net: &UNet, seed: u64) -> ParameterSet {
    let mut p = net.init(&mut RngState::new(seed));
    let mut rng = RngState::new(seed + 1);
    // The zero-initialized head would hide every upstream gradient.
    for t in p.tensors_mut() {
        if t.name.starts_with("out.conv") {
            for v in &mut t.data {
                *v = rng.symmetric(0.5);
            }
        }
    }
    p
}

fn as_f64(p: &ParameterSet) -> Vec<Vec<f64>> {
    p.iter()
        .map(|t| t.data.iter().map(|&v| f64::from(v)).collect())
        .collect()
}

fn locate(p: &[Vec<f64>], mut flat: usize) -> (usize, usize) {
    for (i, t) in p.iter().enumerate() {
        if flat < t.len() {
            return (i, flat);
        }
        flat -= t.len();
    }
    unreachable!()
}

pub fn run_gradient_check(samples: usize) -> Result<f64, String> {
    let net = UNet::new(UNetConfig::toy()).unwrap();
    let params = randomized_params(&net, 21);
    let shape = [2, 1, 8, 8];
    let x = gaussian_like(shape, &mut RngState::new(5)).unwrap();
    let target = gaussian_like(shape, &mut RngState::new(6)).unwrap();
    let t = [7usize, 33];
    let x64: Vec<f64> = x.data().iter().map(|&v| f64::from(v)).collect();
    let y64: Vec<f64> = target.data().iter().map(|&v| f64::from(v)).collect();

    let base = as_f64(&params);
    let analytic = net.loss_and_grad_with(base.clone(), shape, x64.clone(), &t, &y64);
    let loss_at = |p: Vec<Vec<f64>>| net.loss_and_grad_with(p, shape, x64.clone(), &t, &y64).loss;

    let mut pick = RngState::new(99);
    let total = params.scalar_count();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let flat = pick.int_inclusive(0, total - 1);
        let (i, j) = locate(&base, flat);
        let mut plus = base.clone();
        plus[i][j] += STEP;
        let mut minus = base.clone();
        minus[i][j] -= STEP;
        let numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * STEP);
        let a = analytic.grads[i][j];
        let diff = (a - numeric).abs();
        let scale = a.abs().max(numeric.abs());
        if scale < ABS_FLOOR {
            if diff > ABS_FLOOR {
                return Err(format!(
                    "{}: analytic {a:e}, numeric {numeric:e}",
                    params.scalar_owner(flat)
                ));
            }
            continue;
        }
        let rel = diff / scale;
        worst = worst.max(rel);
        if rel > REL_TOL {
            return Err(format!(
                "{}[{j}]: analytic {a:e}, numeric {numeric:e}, rel {rel:e}",
                params.scalar_owner(flat)
            ));
        }
    }
    Ok(worst)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let worst = run_gradient_check(50).unwrap();
    println!("worst relative error over 50 parameters: {worst:e}");
}

#[test]
fn f32_gradients_track_f64_gradients() {
    let net = UNet::new(UNetConfig::toy()).unwrap();
    let params = randomized_params(&net, 8);
    let shape = [2, 1, 8, 8];
    let x = gaussian_like(shape, &mut RngState::new(1)).unwrap();
    let target = gaussian_like(shape, &mut RngState::new(2)).unwrap();
    let t = [3usize, 48];
    let g32 = net.loss_and_grad(&params, &x, &t, &target).unwrap();
    let g64 = net.loss_and_grad_with(
        as_f64(&params),
        shape,
        x.data().iter().map(|&v| f64::from(v)).collect(),
        &t,
        &target
            .data()
            .iter()
            .map(|&v| f64::from(v))
            .collect::<Vec<_>>(),
    );
    assert!((g32.loss - g64.loss).abs() < 1e-5 * g64.loss.max(1.0));
    for (a, b) in g32.grads.iter().flatten().zip(g64.grads.iter().flatten()) {
        let (a, b) = (f64::from(*a), *b);
        assert!((a - b).abs() <= 1e-3 * b.abs().max(1e-2), "{a} vs {b}");
    }
}
