//! Time-conditioned UNet noise predictor.
//!
//! Layout, top to bottom:
//!
//! * time MLP: sinusoidal(t) -> Linear -> SiLU -> Linear
//! * stem: 3x3 conv, 1 -> `base_width`
//! * encoder level `l`: `blocks_per_level` residual blocks ending at
//!   `level_widths[l]` channels; the output is kept as the skip tensor; every
//!   level but the last then halves the resolution with a stride-2 3x3 conv
//! * decoder level `l` (deepest first, excluding the last level): 2x2
//!   stride-2 transposed conv to `level_widths[l]`, concat with the skip
//!   tensor, residual blocks back down to `level_widths[l]`
//! * head: GroupNorm -> SiLU -> 1x1 conv to one channel (zero-initialized)
//!
//! A residual block is `GN -> SiLU -> conv3x3`, plus a per-block projection
//! of SiLU(time embedding) added channelwise, then `GN -> SiLU -> conv3x3`,
//! with a 1x1 conv on the shortcut whenever the channel count changes.

use serde::{Deserialize, Serialize};

use super::graph::{real, Graph, Real, Var};
use super::params::{ParamTensor, ParameterSet};
use super::sinusoidal_embedding;
use crate::batch::ImageBatch;
use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub base_width: usize,
    pub level_widths: Vec<usize>,
    pub blocks_per_level: usize,
    pub time_embed_dim: usize,
    pub image_size: [usize; 2],
}

impl UNetConfig {
    /// 8x8 network used by the smoke tests and gradient checks.
    pub fn toy() -> Self {
        Self {
            in_channels: 1,
            base_width: 8,
            level_widths: vec![16, 32],
            blocks_per_level: 1,
            time_embed_dim: 32,
            image_size: [8, 8],
        }
    }

    /// 32x32 desk preset.
    pub fn desk() -> Self {
        Self {
            in_channels: 1,
            base_width: 32,
            level_widths: vec![32, 64, 128],
            blocks_per_level: 2,
            time_embed_dim: 64,
            image_size: [32, 32],
        }
    }

    /// Full-size 256x256 configuration.
    pub fn full() -> Self {
        Self {
            in_channels: 1,
            base_width: 64,
            level_widths: vec![64, 128, 256, 256, 512],
            blocks_per_level: 2,
            time_embed_dim: 128,
            image_size: [256, 256],
        }
    }

    pub fn levels(&self) -> usize {
        self.level_widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.in_channels != 1 {
            return bad(format!(
                "only single-channel input is supported, got {}",
                self.in_channels
            ));
        }
        if self.base_width == 0 || self.level_widths.is_empty() || self.level_widths.contains(&0) {
            return bad(
                "channel widths must be positive and at least one level is required".into(),
            );
        }
        if self.blocks_per_level == 0 {
            return bad("blocks_per_level must be at least 1".into());
        }
        if self.time_embed_dim < 2 || !self.time_embed_dim.is_multiple_of(2) {
            return bad(format!(
                "time_embed_dim must be even and >= 2, got {}",
                self.time_embed_dim
            ));
        }
        let factor = 1usize << (self.levels() - 1);
        let [h, w] = self.image_size;
        if h == 0 || w == 0 || h % factor != 0 || w % factor != 0 {
            return bad(format!(
                "image size {h}x{w} is not divisible by {factor} ({} levels)",
                self.levels()
            ));
        }
        Ok(())
    }

    /// Number of scalar parameters, counted layer by layer:
    ///
    /// * linear `i -> o`: `o*i + o`; conv `k x k`, `i -> o`: `o*i*k*k + o`;
    ///   transposed 2x2 conv: `i*o*4 + o`; group norm over `c`: `2c`
    /// * residual block `i -> o` with embedding width `e`:
    ///   `2i + (9io + o) + (eo + o) + 2o + (9o^2 + o)`, plus `io + o` when `i != o`
    /// * total = time MLP `2(e^2 + e)` + stem `9b + b` + encoder blocks and
    ///   downsamplers `9w^2 + w` + decoder up-convs and blocks + head `2w0 + w0 + 1`
    pub fn parameter_count(&self) -> usize {
        let e = self.time_embed_dim;
        let lin = |i: usize, o: usize| o * i + o;
        let conv = |i: usize, o: usize, k: usize| o * i * k * k + o;
        let block = |i: usize, o: usize| {
            2 * i
                + conv(i, o, 3)
                + lin(e, o)
                + 2 * o
                + conv(o, o, 3)
                + if i != o { conv(i, o, 1) } else { 0 }
        };
        let mut total = 2 * lin(e, e) + conv(1, self.base_width, 3);
        let mut ch = self.base_width;
        for (l, &w) in self.level_widths.iter().enumerate() {
            for _ in 0..self.blocks_per_level {
                total += block(ch, w);
                ch = w;
            }
            if l + 1 < self.levels() {
                total += conv(w, w, 3);
            }
        }
        for l in (0..self.levels() - 1).rev() {
            let w = self.level_widths[l];
            total += ch * w * 4 + w;
            total += block(2 * w, w);
            for _ in 1..self.blocks_per_level {
                total += block(w, w);
            }
            ch = w;
        }
        total + 2 * ch + conv(ch, 1, 1)
    }
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Largest group count not above 8 that divides `channels`.
pub fn norm_groups(channels: usize) -> usize {
    (1..=8.min(channels))
        .rev()
        .find(|g| channels.is_multiple_of(*g))
        .unwrap_or(1)
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    Kaiming {
        fan_in: usize,
    },
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
struct ParamSlot {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: usize,
    b: usize,
    stride: usize,
    pad: usize,
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: usize,
    beta: usize,
    groups: usize,
}

#[derive(Debug, Clone)]
struct ResBlock {
    norm1: Norm,
    conv1: Conv,
    time: Affine,
    norm2: Norm,
    conv2: Conv,
    skip: Option<Conv>,
}

#[derive(Debug, Clone)]
struct Down {
    blocks: Vec<ResBlock>,
    downsample: Option<Conv>,
}

#[derive(Debug, Clone)]
struct Up {
    upsample: Affine,
    blocks: Vec<ResBlock>,
}

#[derive(Debug, Default)]
struct Builder {
    slots: Vec<ParamSlot>,
}

impl Builder {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        self.slots.push(ParamSlot { name, shape, init });
        self.slots.len() - 1
    }

    fn conv(
        &mut self,
        prefix: &str,
        i: usize,
        o: usize,
        k: usize,
        stride: usize,
        init_zero: bool,
    ) -> Conv {
        let init = if init_zero {
            Init::Zeros
        } else {
            Init::Kaiming { fan_in: i * k * k }
        };
        Conv {
            w: self.param(format!("{prefix}.weight"), vec![o, i, k, k], init),
            b: self.param(format!("{prefix}.bias"), vec![o], Init::Zeros),
            stride,
            pad: k / 2,
        }
    }

    fn linear(&mut self, prefix: &str, i: usize, o: usize) -> Affine {
        Affine {
            w: self.param(
                format!("{prefix}.weight"),
                vec![o, i],
                Init::Kaiming { fan_in: i },
            ),
            b: self.param(format!("{prefix}.bias"), vec![o], Init::Zeros),
        }
    }

    fn up_conv(&mut self, prefix: &str, i: usize, o: usize) -> Affine {
        Affine {
            w: self.param(
                format!("{prefix}.weight"),
                vec![i, o, 2, 2],
                Init::Kaiming { fan_in: i * 4 },
            ),
            b: self.param(format!("{prefix}.bias"), vec![o], Init::Zeros),
        }
    }

    fn norm(&mut self, prefix: &str, c: usize) -> Norm {
        Norm {
            gamma: self.param(format!("{prefix}.weight"), vec![c], Init::Ones),
            beta: self.param(format!("{prefix}.bias"), vec![c], Init::Zeros),
            groups: norm_groups(c),
        }
    }

    fn block(&mut self, prefix: &str, i: usize, o: usize, embed: usize) -> ResBlock {
        ResBlock {
            norm1: self.norm(&format!("{prefix}.norm1"), i),
            conv1: self.conv(&format!("{prefix}.conv1"), i, o, 3, 1, false),
            time: self.linear(&format!("{prefix}.time_proj"), embed, o),
            norm2: self.norm(&format!("{prefix}.norm2"), o),
            conv2: self.conv(&format!("{prefix}.conv2"), o, o, 3, 1, false),
            skip: (i != o).then(|| self.conv(&format!("{prefix}.skip"), i, o, 1, 1, false)),
        }
    }
}

/// A UNet architecture: the config plus the canonical parameter layout.
#[derive(Debug, Clone)]
pub struct UNet {
    config: UNetConfig,
    slots: Vec<ParamSlot>,
    time_mlp: [Affine; 2],
    stem: Conv,
    down: Vec<Down>,
    up: Vec<Up>,
    head_norm: Norm,
    head_conv: Conv,
}

/// Value and gradients of the mean squared error against a target.
#[derive(Debug, Clone)]
pub struct LossAndGrad<T> {
    pub loss: f64,
    pub prediction: Vec<T>,
    pub grads: Vec<Vec<T>>,
}

impl UNet {
    pub fn new(config: UNetConfig) -> Result<Self> {
        config.validate()?;
        let e = config.time_embed_dim;
        let mut b = Builder::default();
        let time_mlp = [b.linear("time_mlp.0", e, e), b.linear("time_mlp.1", e, e)];
        let stem = b.conv("stem", config.in_channels, config.base_width, 3, 1, false);
        let mut ch = config.base_width;
        let mut down = Vec::new();
        for (l, &w) in config.level_widths.iter().enumerate() {
            let mut blocks = Vec::new();
            for k in 0..config.blocks_per_level {
                blocks.push(b.block(&format!("down.{l}.block.{k}"), ch, w, e));
                ch = w;
            }
            let downsample = (l + 1 < config.levels())
                .then(|| b.conv(&format!("down.{l}.downsample"), w, w, 3, 2, false));
            down.push(Down { blocks, downsample });
        }
        let mut up = Vec::new();
        for l in (0..config.levels() - 1).rev() {
            let w = config.level_widths[l];
            let upsample = b.up_conv(&format!("up.{l}.upsample"), ch, w);
            let mut blocks = vec![b.block(&format!("up.{l}.block.0"), 2 * w, w, e)];
            for k in 1..config.blocks_per_level {
                blocks.push(b.block(&format!("up.{l}.block.{k}"), w, w, e));
            }
            up.push(Up { upsample, blocks });
            ch = w;
        }
        let head_norm = b.norm("out.norm", ch);
        let head_conv = b.conv("out.conv", ch, 1, 1, 1, true);
        Ok(Self {
            config,
            slots: b.slots,
            time_mlp,
            stem,
            down,
            up,
            head_norm,
            head_conv,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    /// Canonical `(name, shape)` list.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.slots
            .iter()
            .map(|s| (s.name.clone(), s.shape.clone()))
            .collect()
    }

    pub fn init(&self, rng: &mut RngState) -> ParameterSet {
        let tensors = self
            .slots
            .iter()
            .map(|s| {
                let len = s.shape.iter().product();
                let data = match s.init {
                    Init::Zeros => vec![0.0; len],
                    Init::Ones => vec![1.0; len],
                    Init::Kaiming { fan_in } => {
                        let bound = (6.0 / fan_in as f64).sqrt() as f32;
                        (0..len).map(|_| rng.symmetric(bound)).collect()
                    }
                };
                ParamTensor {
                    name: s.name.clone(),
                    shape: s.shape.clone(),
                    data,
                }
            })
            .collect();
        ParameterSet::new(tensors).expect("layout shapes are consistent")
    }

    /// Checks that `params` follows this network's canonical layout.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        if params.len() != self.slots.len() {
            return Err(Error::Config(format!(
                "expected {} parameter arrays, found {}",
                self.slots.len(),
                params.len()
            )));
        }
        for (slot, p) in self.slots.iter().zip(params.iter()) {
            if slot.name != p.name || slot.shape != p.shape {
                return Err(Error::Config(format!(
                    "parameter {} {:?} does not match layout entry {} {:?}",
                    p.name, p.shape, slot.name, slot.shape
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, shape: [usize; 4], t: &[usize]) -> Result<()> {
        let [n, c, h, w] = shape;
        if c != self.config.in_channels || [h, w] != self.config.image_size {
            return Err(Error::ShapeMismatch {
                left: shape.to_vec(),
                right: vec![
                    n,
                    self.config.in_channels,
                    self.config.image_size[0],
                    self.config.image_size[1],
                ],
            });
        }
        if t.len() != n {
            return Err(Error::ShapeMismatch {
                left: shape.to_vec(),
                right: vec![t.len()],
            });
        }
        Ok(())
    }

    fn block<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        blk: &ResBlock,
        x: Var,
        temb: Var,
    ) -> Var {
        let h = g.group_norm(x, p[blk.norm1.gamma], p[blk.norm1.beta], blk.norm1.groups);
        let h = g.silu(h);
        let h = g.conv2d(h, p[blk.conv1.w], p[blk.conv1.b], 1, 1);
        let proj = g.linear(temb, p[blk.time.w], p[blk.time.b]);
        let h = g.add_channel(h, proj);
        let h = g.group_norm(h, p[blk.norm2.gamma], p[blk.norm2.beta], blk.norm2.groups);
        let h = g.silu(h);
        let h = g.conv2d(h, p[blk.conv2.w], p[blk.conv2.b], 1, 1);
        let shortcut = match blk.skip {
            Some(c) => g.conv2d(x, p[c.w], p[c.b], c.stride, c.pad),
            None => x,
        };
        g.add(h, shortcut)
    }

    /// Builds the forward pass on `g` and returns the output node.
    fn forward<T: Real>(&self, g: &mut Graph<T>, p: &[Var], x: Var, t: &[usize]) -> Var {
        let dim = self.config.time_embed_dim;
        let emb: Vec<T> = sinusoidal_embedding(t, dim)
            .expect("validated embedding width")
            .values
            .into_iter()
            .flatten()
            .map(real)
            .collect();
        let emb = g.input(vec![t.len(), dim], emb);
        let temb = g.linear(emb, p[self.time_mlp[0].w], p[self.time_mlp[0].b]);
        let temb = g.silu(temb);
        let temb = g.linear(temb, p[self.time_mlp[1].w], p[self.time_mlp[1].b]);
        // every block consumes SiLU(temb)
        let temb = g.silu(temb);

        let mut h = g.conv2d(x, p[self.stem.w], p[self.stem.b], 1, 1);
        let mut skips = Vec::new();
        for level in &self.down {
            for blk in &level.blocks {
                h = self.block(g, p, blk, h, temb);
            }
            skips.push(h);
            if let Some(c) = level.downsample {
                h = g.conv2d(h, p[c.w], p[c.b], c.stride, c.pad);
            }
        }
        // deepest level output feeds the decoder directly
        skips.pop();
        for level in &self.up {
            h = g.up_conv(h, p[level.upsample.w], p[level.upsample.b]);
            let skip = skips.pop().expect("one skip per decoder level");
            h = g.concat(h, skip);
            for blk in &level.blocks {
                h = self.block(g, p, blk, h, temb);
            }
        }
        let h = g.group_norm(
            h,
            p[self.head_norm.gamma],
            p[self.head_norm.beta],
            self.head_norm.groups,
        );
        let h = g.silu(h);
        g.conv2d(h, p[self.head_conv.w], p[self.head_conv.b], 1, 0)
    }

    fn bind<T: Real>(&self, g: &mut Graph<T>, params: Vec<Vec<T>>) -> Vec<Var> {
        self.slots
            .iter()
            .zip(params)
            .map(|(s, data)| g.input(s.shape.clone(), data))
            .collect()
    }

    /// Predicted noise for a batch.
    pub fn predict(
        &self,
        params: &ParameterSet,
        x_t: &ImageBatch,
        t: &[usize],
    ) -> Result<ImageBatch> {
        self.check_input(x_t.shape(), t)?;
        self.check_params(params)?;
        let mut g = Graph::<f32>::new();
        let p = self.bind(&mut g, params.iter().map(|t| t.data.clone()).collect());
        let x = g.input(x_t.shape().to_vec(), x_t.data().to_vec());
        let out = self.forward(&mut g, &p, x, t);
        let data = g.value(out).to_vec();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                t: t.first().copied().unwrap_or(0),
                context: "network output".into(),
            });
        }
        Ok(ImageBatch::from_raw(x_t.shape(), data))
    }

    /// Mean squared error between the prediction and `target`, with the
    /// gradient of that loss for every parameter array.
    pub fn loss_and_grad(
        &self,
        params: &ParameterSet,
        x_t: &ImageBatch,
        t: &[usize],
        target: &ImageBatch,
    ) -> Result<LossAndGrad<f32>> {
        self.check_input(x_t.shape(), t)?;
        self.check_params(params)?;
        if target.shape() != x_t.shape() {
            return Err(Error::ShapeMismatch {
                left: x_t.shape().to_vec(),
                right: target.shape().to_vec(),
            });
        }
        Ok(self.loss_and_grad_with(
            params.iter().map(|t| t.data.clone()).collect(),
            x_t.shape(),
            x_t.data().to_vec(),
            t,
            target.data(),
        ))
    }

    /// Same computation in any scalar type. Shapes are not re-validated.
    pub fn loss_and_grad_with<T: Real>(
        &self,
        params: Vec<Vec<T>>,
        shape: [usize; 4],
        x_t: Vec<T>,
        t: &[usize],
        target: &[T],
    ) -> LossAndGrad<T> {
        let mut g = Graph::<T>::new();
        let p = self.bind(&mut g, params);
        let x = g.input(shape.to_vec(), x_t);
        let out = self.forward(&mut g, &p, x, t);
        let pred = g.value(out).to_vec();
        let n = pred.len() as f64;
        let mut loss = 0.0;
        let scale = real::<T>(2.0 / n);
        let seed: Vec<T> = pred
            .iter()
            .zip(target)
            .map(|(&a, &b)| {
                let d = a - b;
                let d64 = d.to_f64().unwrap_or(f64::NAN);
                loss += d64 * d64;
                d * scale
            })
            .collect();
        let mut all = g.backward(out, seed);
        let grads = p
            .iter()
            .map(|v| std::mem::take(&mut all[v.index()]))
            .zip(&self.slots)
            .map(|(gr, s)| {
                if gr.is_empty() {
                    vec![T::zero(); s.shape.iter().product()]
                } else {
                    gr
                }
            })
            .collect();
        LossAndGrad {
            loss: loss / n,
            prediction: pred,
            grads,
        }
    }
}

/// Initial parameters for `config`.
pub fn unet_init(config: &UNetConfig, rng: &mut RngState) -> Result<ParameterSet> {
    Ok(UNet::new(config.clone())?.init(rng))
}

/// Predicted noise for `x_t` at per-item timesteps `t`.
pub fn unet_predict(
    params: &ParameterSet,
    config: &UNetConfig,
    x_t: &ImageBatch,
    t: &[usize],
) -> Result<ImageBatch> {
    UNet::new(config.clone())?.predict(params, x_t, t)
}
