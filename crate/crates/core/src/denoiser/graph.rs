//! A small reverse-mode tape covering the layers the UNet needs.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is a
//! valid topological order for gradient propagation. All 4-D values are NCHW.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type the network can be evaluated in. Training uses `f32`; the
/// finite-difference check runs the same code in `f64`.
pub trait Real:
    Float + FromPrimitive + NumAssign + Default + Debug + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn real<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("representable")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub(crate) fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    /// Transposed convolution, kernel 2, stride 2.
    UpConv {
        x: Var,
        w: Var,
        b: Var,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        // mean and 1/std per (item, group)
        stats: Vec<(T, T)>,
    },
    Silu(Var),
    Add(Var, Var),
    /// (n, c, h, w) + (n, c) broadcast over space.
    AddChannel {
        x: Var,
        v: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Concat(Var, Var),
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
}

pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected a 4-D value, got {shape:?}");
    (shape[0], shape[1], shape[2], shape[3])
}

/// Range of output positions `o` for which `o * stride + k - pad` lands in `0..len`.
fn valid_range(len: usize, out_len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let (len, k, s, p) = (len as isize, k as isize, stride as isize, pad as isize);
    let lo = (p - k).max(0);
    let lo = (lo + s - 1) / s;
    let hi = (len - 1 + p - k).div_euclid(s) + 1;
    let hi = hi.clamp(0, out_len as isize);
    (lo as usize, hi.max(lo) as usize)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, shape: Vec<usize>, value: Vec<T>) -> Var {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        self.push(shape, value, Op::Input)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (n, ci, h, wd) = dims4(self.shape(x));
        let (co, wci, k, k2) = dims4(self.shape(w));
        assert_eq!((wci, k), (ci, k2), "conv weight does not match input");
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let mut out = vec![T::zero(); n * co * ho * wo];
        let (plane_in, plane_out) = (h * wd, ho * wo);
        for bi in 0..n {
            for o in 0..co {
                let dst = &mut out[(bi * co + o) * plane_out..][..plane_out];
                dst.fill(bv[o]);
                for c in 0..ci {
                    let src = &xv[(bi * ci + c) * plane_in..][..plane_in];
                    for ky in 0..k {
                        let (y0, y1) = valid_range(h, ho, ky, stride, pad);
                        for kx in 0..k {
                            let weight = wv[((o * ci + c) * k + ky) * k + kx];
                            let (x0, x1) = valid_range(wd, wo, kx, stride, pad);
                            for oy in y0..y1 {
                                let iy = oy * stride + ky - pad;
                                let row_in = &src[iy * wd..][..wd];
                                let row_out = &mut dst[oy * wo..][..wo];
                                for ox in x0..x1 {
                                    row_out[ox] += weight * row_in[ox * stride + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
        }
        self.push(
            vec![n, co, ho, wo],
            out,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
        )
    }

    pub fn up_conv(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, ci, h, wd) = dims4(self.shape(x));
        let (wci, co, k, _) = dims4(self.shape(w));
        assert_eq!((wci, k), (ci, 2), "up-conv weight does not match input");
        let (ho, wo) = (2 * h, 2 * wd);
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let mut out = vec![T::zero(); n * co * ho * wo];
        for bi in 0..n {
            for o in 0..co {
                let dst = &mut out[(bi * co + o) * ho * wo..][..ho * wo];
                dst.fill(bv[o]);
                for c in 0..ci {
                    let src = &xv[(bi * ci + c) * h * wd..][..h * wd];
                    let kw = &wv[(c * co + o) * 4..][..4];
                    for y in 0..h {
                        for xx in 0..wd {
                            let v = src[y * wd + xx];
                            let base = 2 * y * wo + 2 * xx;
                            dst[base] += kw[0] * v;
                            dst[base + 1] += kw[1] * v;
                            dst[base + wo] += kw[2] * v;
                            dst[base + wo + 1] += kw[3] * v;
                        }
                    }
                }
            }
        }
        self.push(vec![n, co, ho, wo], out, Op::UpConv { x, w, b })
    }

    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        let (n, c, h, w) = dims4(self.shape(x));
        assert_eq!(
            c % groups,
            0,
            "{c} channels do not split into {groups} groups"
        );
        let per = c / groups;
        let span = per * h * w;
        let count = real::<T>(span as f64);
        let eps = real::<T>(NORM_EPS);
        let xv = self.value(x);
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let mut out = vec![T::zero(); xv.len()];
        let mut stats = Vec::with_capacity(n * groups);
        for bi in 0..n {
            for g in 0..groups {
                let start = (bi * c + g * per) * h * w;
                let src = &xv[start..start + span];
                let mean = src.iter().fold(T::zero(), |a, &v| a + v) / count;
                let var = src
                    .iter()
                    .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                    / count;
                let rstd = T::one() / (var + eps).sqrt();
                stats.push((mean, rstd));
                for j in 0..per {
                    let ch = g * per + j;
                    let off = j * h * w;
                    for i in 0..h * w {
                        let xhat = (src[off + i] - mean) * rstd;
                        out[start + off + i] = xhat * gv[ch] + bv[ch];
                    }
                }
            }
        }
        self.push(
            vec![n, c, h, w],
            out,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                stats,
            },
        )
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = self
            .value(x)
            .iter()
            .map(|&v| v / (T::one() + (-v).exp()))
            .collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Silu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b));
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&p, &q)| p + q)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Add(a, b))
    }

    pub fn add_channel(&mut self, x: Var, v: Var) -> Var {
        let (n, c, h, w) = dims4(self.shape(x));
        assert_eq!(self.shape(v), &[n, c]);
        let vv = self.value(v);
        let mut out = self.value(x).to_vec();
        for (plane, &bias) in out.chunks_mut(h * w).zip(vv) {
            for p in plane {
                *p += bias;
            }
        }
        self.push(vec![n, c, h, w], out, Op::AddChannel { x, v })
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, fin) = (self.shape(x)[0], self.shape(x)[1]);
        let (fout, win) = (self.shape(w)[0], self.shape(w)[1]);
        assert_eq!(fin, win, "linear weight does not match input");
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let mut out = Vec::with_capacity(n * fout);
        for row in xv.chunks(fin) {
            for o in 0..fout {
                let wr = &wv[o * fin..][..fin];
                out.push(wr.iter().zip(row).fold(bv[o], |a, (&p, &q)| a + p * q));
            }
        }
        self.push(vec![n, fout], out, Op::Linear { x, w, b })
    }

    /// Channel concatenation `[a, b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (n, ca, h, w) = dims4(self.shape(a));
        let (nb, cb, hb, wb) = dims4(self.shape(b));
        assert_eq!((n, h, w), (nb, hb, wb));
        let (la, lb) = (ca * h * w, cb * h * w);
        let mut out = Vec::with_capacity(n * (la + lb));
        for i in 0..n {
            out.extend_from_slice(&self.value(a)[i * la..][..la]);
            out.extend_from_slice(&self.value(b)[i * lb..][..lb]);
        }
        self.push(vec![n, ca + cb, h, w], out, Op::Concat(a, b))
    }

    /// Back-propagates `seed` (the gradient of some scalar with respect to
    /// `out`). Returns one gradient per node, empty for nodes the scalar does
    /// not depend on.
    pub fn backward(&self, out: Var, seed: Vec<T>) -> Vec<Vec<T>> {
        assert_eq!(seed.len(), self.value(out).len());
        let mut grads: Vec<Vec<T>> = vec![Vec::new(); self.nodes.len()];
        grads[out.0] = seed;
        for idx in (0..=out.0).rev() {
            if grads[idx].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = g;
        }
        grads
    }

    fn take_grad(&self, grads: &mut [Vec<T>], v: Var) -> Vec<T> {
        let slot = std::mem::take(&mut grads[v.0]);
        if slot.is_empty() {
            vec![T::zero(); self.nodes[v.0].value.len()]
        } else {
            slot
        }
    }

    fn backward_node(&self, idx: usize, g: &[T], grads: &mut [Vec<T>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input => {}
            &Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let (n, ci, h, wd) = dims4(&self.nodes[x.0].shape);
                let (co, _, k, _) = dims4(&self.nodes[w.0].shape);
                let (_, _, ho, wo) = dims4(&node.shape);
                let xv = self.value(x);
                let wv = self.value(w);
                let mut gx = self.take_grad(grads, x);
                let mut gw = self.take_grad(grads, w);
                let mut gb = self.take_grad(grads, b);
                let (plane_in, plane_out) = (h * wd, ho * wo);
                for bi in 0..n {
                    for o in 0..co {
                        let go = &g[(bi * co + o) * plane_out..][..plane_out];
                        gb[o] += go.iter().fold(T::zero(), |a, &v| a + v);
                        for c in 0..ci {
                            let src = &xv[(bi * ci + c) * plane_in..][..plane_in];
                            let gsrc = &mut gx[(bi * ci + c) * plane_in..][..plane_in];
                            for ky in 0..k {
                                let (y0, y1) = valid_range(h, ho, ky, stride, pad);
                                for kx in 0..k {
                                    let wi = ((o * ci + c) * k + ky) * k + kx;
                                    let weight = wv[wi];
                                    let (x0, x1) = valid_range(wd, wo, kx, stride, pad);
                                    let mut dw = T::zero();
                                    for oy in y0..y1 {
                                        let iy = oy * stride + ky - pad;
                                        let row_g = &go[oy * wo..][..wo];
                                        for (ox, &gv) in row_g.iter().enumerate().take(x1).skip(x0)
                                        {
                                            let ix = iy * wd + ox * stride + kx - pad;
                                            dw += gv * src[ix];
                                            gsrc[ix] += gv * weight;
                                        }
                                    }
                                    gw[wi] += dw;
                                }
                            }
                        }
                    }
                }
                grads[x.0] = gx;
                grads[w.0] = gw;
                grads[b.0] = gb;
            }
            &Op::UpConv { x, w, b } => {
                let (n, ci, h, wd) = dims4(&self.nodes[x.0].shape);
                let co = self.nodes[w.0].shape[1];
                let wo = 2 * wd;
                let xv = self.value(x);
                let wv = self.value(w);
                let mut gx = self.take_grad(grads, x);
                let mut gw = self.take_grad(grads, w);
                let mut gb = self.take_grad(grads, b);
                for bi in 0..n {
                    for o in 0..co {
                        let go = &g[(bi * co + o) * 4 * h * wd..][..4 * h * wd];
                        gb[o] += go.iter().fold(T::zero(), |a, &v| a + v);
                        for c in 0..ci {
                            let src = &xv[(bi * ci + c) * h * wd..][..h * wd];
                            let gsrc = &mut gx[(bi * ci + c) * h * wd..][..h * wd];
                            let kw = &wv[(c * co + o) * 4..][..4];
                            let mut dk = [T::zero(); 4];
                            for y in 0..h {
                                for xx in 0..wd {
                                    let base = 2 * y * wo + 2 * xx;
                                    let q =
                                        [go[base], go[base + 1], go[base + wo], go[base + wo + 1]];
                                    let v = src[y * wd + xx];
                                    let mut s = T::zero();
                                    for j in 0..4 {
                                        dk[j] += q[j] * v;
                                        s += q[j] * kw[j];
                                    }
                                    gsrc[y * wd + xx] += s;
                                }
                            }
                            for (acc, d) in gw[(c * co + o) * 4..][..4].iter_mut().zip(dk) {
                                *acc += d;
                            }
                        }
                    }
                }
                grads[x.0] = gx;
                grads[w.0] = gw;
                grads[b.0] = gb;
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                stats,
            } => {
                let (x, gamma, beta, groups) = (*x, *gamma, *beta, *groups);
                let (n, c, h, w) = dims4(&self.nodes[x.0].shape);
                let per = c / groups;
                let span = per * h * w;
                let count = real::<T>(span as f64);
                let xv = self.value(x);
                let gv = self.value(gamma);
                let mut gx = self.take_grad(grads, x);
                let mut ggamma = self.take_grad(grads, gamma);
                let mut gbeta = self.take_grad(grads, beta);
                let mut dxhat = vec![T::zero(); span];
                let mut xhat = vec![T::zero(); span];
                for bi in 0..n {
                    for grp in 0..groups {
                        let (mean, rstd) = stats[bi * groups + grp];
                        let start = (bi * c + grp * per) * h * w;
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for j in 0..per {
                            let ch = grp * per + j;
                            for i in 0..h * w {
                                let k = j * h * w + i;
                                let xh = (xv[start + k] - mean) * rstd;
                                let gy = g[start + k];
                                xhat[k] = xh;
                                dxhat[k] = gy * gv[ch];
                                ggamma[ch] += gy * xh;
                                gbeta[ch] += gy;
                                sum_d += dxhat[k];
                                sum_dx += dxhat[k] * xh;
                            }
                        }
                        let mean_d = sum_d / count;
                        let mean_dx = sum_dx / count;
                        for k in 0..span {
                            gx[start + k] += rstd * (dxhat[k] - mean_d - xhat[k] * mean_dx);
                        }
                    }
                }
                grads[x.0] = gx;
                grads[gamma.0] = ggamma;
                grads[beta.0] = gbeta;
            }
            &Op::Silu(x) => {
                let xv = self.value(x);
                let mut gx = self.take_grad(grads, x);
                for ((d, &v), &gy) in gx.iter_mut().zip(xv).zip(g) {
                    let s = T::one() / (T::one() + (-v).exp());
                    *d += gy * s * (T::one() + v * (T::one() - s));
                }
                grads[x.0] = gx;
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    let mut gv = self.take_grad(grads, v);
                    for (d, &gy) in gv.iter_mut().zip(g) {
                        *d += gy;
                    }
                    grads[v.0] = gv;
                }
            }
            &Op::AddChannel { x, v } => {
                let (_, _, h, w) = dims4(&self.nodes[x.0].shape);
                let mut gx = self.take_grad(grads, x);
                for (d, &gy) in gx.iter_mut().zip(g) {
                    *d += gy;
                }
                grads[x.0] = gx;
                let mut gv = self.take_grad(grads, v);
                for (d, plane) in gv.iter_mut().zip(g.chunks(h * w)) {
                    *d += plane.iter().fold(T::zero(), |a, &q| a + q);
                }
                grads[v.0] = gv;
            }
            &Op::Linear { x, w, b } => {
                let fin = self.nodes[x.0].shape[1];
                let fout = self.nodes[w.0].shape[0];
                let xv = self.value(x);
                let wv = self.value(w);
                let mut gx = self.take_grad(grads, x);
                let mut gw = self.take_grad(grads, w);
                let mut gb = self.take_grad(grads, b);
                for (row, (gy_row, gx_row)) in
                    xv.chunks(fin).zip(g.chunks(fout).zip(gx.chunks_mut(fin)))
                {
                    for o in 0..fout {
                        let gy = gy_row[o];
                        gb[o] += gy;
                        let wr = &wv[o * fin..][..fin];
                        let gwr = &mut gw[o * fin..][..fin];
                        for i in 0..fin {
                            gwr[i] += gy * row[i];
                            gx_row[i] += gy * wr[i];
                        }
                    }
                }
                grads[x.0] = gx;
                grads[w.0] = gw;
                grads[b.0] = gb;
            }
            &Op::Concat(a, b) => {
                let (n, ca, h, w) = dims4(&self.nodes[a.0].shape);
                let cb = self.nodes[b.0].shape[1];
                let (la, lb) = (ca * h * w, cb * h * w);
                let mut ga = self.take_grad(grads, a);
                for i in 0..n {
                    let src = &g[i * (la + lb)..][..la];
                    for (d, &gy) in ga[i * la..][..la].iter_mut().zip(src) {
                        *d += gy;
                    }
                }
                grads[a.0] = ga;
                let mut gb = self.take_grad(grads, b);
                for i in 0..n {
                    let src = &g[i * (la + lb) + la..][..lb];
                    for (d, &gy) in gb[i * lb..][..lb].iter_mut().zip(src) {
                        *d += gy;
                    }
                }
                grads[b.0] = gb;
            }
        }
    }
}
