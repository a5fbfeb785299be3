//! A small feed-forward network with explicit forward and backward passes.
//!
//! Activations are stored as flat `batch × channels × height × width` arrays.
//! Dense layers read the same buffer as `batch × (channels·height·width)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ChartError;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn size(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn flat(n: usize) -> Self {
        Self::new(n, 1, 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    /// Stride-1 cross-correlation with zero "same" padding; odd kernels.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    BatchNorm2d {
        channels: usize,
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Relu,
    /// Averages over the channel axis: `C × H × W → 1 × H × W`.
    ChannelMeanPool,
    Dense {
        inputs: usize,
        outputs: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::BatchNorm2d { .. } => "batchnorm",
            Layer::Relu => "relu",
            Layer::ChannelMeanPool => "adaptive_avg_pool",
            Layer::Dense { .. } => "dense",
        }
    }

    fn output_shape(&self, input: Shape) -> Result<Shape, ChartError> {
        let mismatch = |expected: usize, got: usize| ChartError::ShapeMismatch { got, expected };
        match self {
            Layer::Conv2d { in_channels, out_channels, kernel, .. } => {
                if input.channels != *in_channels {
                    return Err(mismatch(*in_channels, input.channels));
                }
                if kernel.0 % 2 == 0 || kernel.1 % 2 == 0 {
                    return Err(ChartError::InvalidNetwork("convolution kernels must be odd".into()));
                }
                Ok(Shape::new(*out_channels, input.height, input.width))
            }
            Layer::BatchNorm2d { channels, .. } => {
                if input.channels != *channels {
                    return Err(mismatch(*channels, input.channels));
                }
                Ok(input)
            }
            Layer::Relu => Ok(input),
            Layer::ChannelMeanPool => Ok(Shape::new(1, input.height, input.width)),
            Layer::Dense { inputs, outputs, .. } => {
                if input.size() != *inputs {
                    return Err(mismatch(*inputs, input.size()));
                }
                Ok(Shape::flat(*outputs))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// conv 16@3×3 → BN → ReLU → conv 32@5×5 → BN → ReLU → channel mean →
    /// dense 10 → ReLU → dense out.
    Conv,
    /// flatten → dense 64 → ReLU → dense 32 → ReLU → dense out.
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch-norm uses batch statistics.
    Train,
    /// Batch-norm uses running statistics.
    Eval,
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    count: usize,
}

/// Activations recorded during a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub batch: usize,
    inputs: Vec<Vec<f64>>,
    shapes: Vec<Shape>,
    bn: Vec<Option<BnCache>>,
    pub output: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input: Shape,
    pub layers: Vec<Layer>,
}

fn kaiming_uniform(fan_in: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

fn conv(in_c: usize, out_c: usize, k: usize, rng: &mut ChaCha8Rng) -> Layer {
    Layer::Conv2d {
        in_channels: in_c,
        out_channels: out_c,
        kernel: (k, k),
        weight: kaiming_uniform(in_c * k * k, out_c * in_c * k * k, rng),
        bias: vec![0.0; out_c],
    }
}

fn batchnorm(c: usize) -> Layer {
    Layer::BatchNorm2d {
        channels: c,
        gamma: vec![1.0; c],
        beta: vec![0.0; c],
        running_mean: vec![0.0; c],
        running_var: vec![1.0; c],
    }
}

fn dense(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Layer {
    Layer::Dense {
        inputs,
        outputs,
        weight: kaiming_uniform(inputs, inputs * outputs, rng),
        bias: vec![0.0; outputs],
    }
}

impl Network {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self, ChartError> {
        let net = Self { input, layers };
        net.output_shape()?;
        Ok(net)
    }

    /// Builds a freshly initialized network for single-channel `height × width`
    /// inputs.
    pub fn build(
        arch: Architecture,
        height: usize,
        width: usize,
        out_dim: usize,
        seed: u64,
    ) -> Result<Self, ChartError> {
        if height == 0 || width == 0 || out_dim == 0 {
            return Err(ChartError::InvalidNetwork("empty input or output".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spatial = height * width;
        let layers = match arch {
            Architecture::Conv => vec![
                conv(1, 16, 3, &mut rng),
                batchnorm(16),
                Layer::Relu,
                conv(16, 32, 5, &mut rng),
                batchnorm(32),
                Layer::Relu,
                Layer::ChannelMeanPool,
                dense(spatial, 10, &mut rng),
                Layer::Relu,
                dense(10, out_dim, &mut rng),
            ],
            Architecture::Dense => vec![
                dense(spatial, 64, &mut rng),
                Layer::Relu,
                dense(64, 32, &mut rng),
                Layer::Relu,
                dense(32, out_dim, &mut rng),
            ],
        };
        Self::new(Shape::new(1, height, width), layers)
    }

    pub fn output_shape(&self) -> Result<Shape, ChartError> {
        self.layers.iter().try_fold(self.input, |s, l| l.output_shape(s))
    }

    pub fn output_dim(&self) -> usize {
        self.output_shape().map(|s| s.size()).unwrap_or(0)
    }

    /// Trainable parameter arrays in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                Layer::BatchNorm2d { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                Layer::Relu | Layer::ChannelMeanPool => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                Layer::BatchNorm2d { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                Layer::Relu | Layer::ChannelMeanPool => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::BatchNorm2d { gamma, beta, running_mean, running_var, .. } => {
                [gamma, beta, running_mean, running_var].iter().all(|v| v.iter().all(|x| x.is_finite()))
            }
            Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                weight.iter().chain(bias).all(|x| x.is_finite())
            }
            _ => true,
        })
    }

    pub fn forward(&self, input: &[f64], batch: usize, mode: Mode) -> Result<ForwardCache, ChartError> {
        if input.len() != batch * self.input.size() {
            return Err(ChartError::ShapeMismatch {
                got: input.len(),
                expected: batch * self.input.size(),
            });
        }
        let mut shape = self.input;
        let mut x = input.to_vec();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut bn = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let out_shape = layer.output_shape(shape)?;
            let (y, cache) = layer_forward(layer, &x, batch, shape, mode);
            inputs.push(std::mem::replace(&mut x, y));
            shapes.push(shape);
            bn.push(cache);
            shape = out_shape;
        }
        Ok(ForwardCache {
            batch,
            inputs,
            shapes,
            bn,
            output: x,
        })
    }

    /// Gradients of every parameter array (in `params` order) given the
    /// gradient of the output.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(grad_output.len(), cache.output.len(), "gradient shape");
        let mut grads_rev: Vec<Vec<f64>> = Vec::new();
        let mut g = grad_output.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[idx];
            let shape = cache.shapes[idx];
            let batch = cache.batch;
            match layer {
                Layer::Conv2d { in_channels, out_channels, kernel, weight, .. } => {
                    let (gx, gw, gb) =
                        conv_backward(x, &g, weight, batch, *in_channels, *out_channels, *kernel, shape);
                    grads_rev.push(gb);
                    grads_rev.push(gw);
                    g = gx;
                }
                Layer::BatchNorm2d { channels, gamma, .. } => {
                    let c = cache.bn[idx].as_ref().expect("batch-norm cache");
                    let (gx, gg, gbeta) = bn_backward(&g, c, gamma, batch, *channels, shape);
                    grads_rev.push(gbeta);
                    grads_rev.push(gg);
                    g = gx;
                }
                Layer::Relu => {
                    g.iter_mut().zip(x).for_each(|(gi, xi)| {
                        if *xi <= 0.0 {
                            *gi = 0.0
                        }
                    });
                }
                Layer::ChannelMeanPool => {
                    let hw = shape.height * shape.width;
                    let c = shape.channels;
                    let mut gx = vec![0.0; x.len()];
                    for b in 0..batch {
                        let gp = &g[b * hw..(b + 1) * hw];
                        for ch in 0..c {
                            let base = (b * c + ch) * hw;
                            gx[base..base + hw].iter_mut().zip(gp).for_each(|(o, v)| *o = v / c as f64);
                        }
                    }
                    g = gx;
                }
                Layer::Dense { inputs, outputs, weight, .. } => {
                    let mut gx = vec![0.0; batch * inputs];
                    let mut gw = vec![0.0; weight.len()];
                    let mut gb = vec![0.0; *outputs];
                    for b in 0..batch {
                        let xb = &x[b * inputs..(b + 1) * inputs];
                        let gxb = &mut gx[b * inputs..(b + 1) * inputs];
                        for o in 0..*outputs {
                            let go = g[b * outputs + o];
                            if go == 0.0 {
                                continue;
                            }
                            gb[o] += go;
                            let wrow = &weight[o * inputs..(o + 1) * inputs];
                            let gwrow = &mut gw[o * inputs..(o + 1) * inputs];
                            for i in 0..*inputs {
                                gwrow[i] += go * xb[i];
                                gxb[i] += go * wrow[i];
                            }
                        }
                    }
                    grads_rev.push(gb);
                    grads_rev.push(gw);
                    g = gx;
                }
            }
        }
        grads_rev.reverse();
        grads_rev
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// estimates. The running variance uses the unbiased batch variance.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (layer, c) in self.layers.iter_mut().zip(&cache.bn) {
            if let (Layer::BatchNorm2d { running_mean, running_var, .. }, Some(c)) = (layer, c) {
                let unbias = if c.count > 1 {
                    c.count as f64 / (c.count - 1) as f64
                } else {
                    1.0
                };
                for ch in 0..running_mean.len() {
                    running_mean[ch] = (1.0 - BN_MOMENTUM) * running_mean[ch] + BN_MOMENTUM * c.mean[ch];
                    running_var[ch] = (1.0 - BN_MOMENTUM) * running_var[ch] + BN_MOMENTUM * c.var[ch] * unbias;
                }
            }
        }
    }

    /// Inference on a batch; batch-norm uses running statistics.
    pub fn predict(&self, input: &[f64], batch: usize) -> Result<Vec<f64>, ChartError> {
        Ok(self.forward(input, batch, Mode::Eval)?.output)
    }
}

fn layer_forward(layer: &Layer, x: &[f64], batch: usize, shape: Shape, mode: Mode) -> (Vec<f64>, Option<BnCache>) {
    match layer {
        Layer::Conv2d { in_channels, out_channels, kernel, weight, bias } => (
            conv_forward(x, weight, bias, batch, *in_channels, *out_channels, *kernel, shape),
            None,
        ),
        Layer::BatchNorm2d { channels, gamma, beta, running_mean, running_var } => {
            let hw = shape.height * shape.width;
            let c = *channels;
            let count = batch * hw;
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut mean = vec![0.0; c];
                    let mut var = vec![0.0; c];
                    for ch in 0..c {
                        let plane = |b: usize| &x[(b * c + ch) * hw..(b * c + ch + 1) * hw];
                        let m = (0..batch).map(|b| plane(b).iter().sum::<f64>()).sum::<f64>() / count as f64;
                        let v = (0..batch)
                            .map(|b| plane(b).iter().map(|v| (v - m).powi(2)).sum::<f64>())
                            .sum::<f64>()
                            / count as f64;
                        mean[ch] = m;
                        var[ch] = v;
                    }
                    (mean, var)
                }
                Mode::Eval => (running_mean.clone(), running_var.clone()),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = vec![0.0; x.len()];
            let mut y = vec![0.0; x.len()];
            for b in 0..batch {
                for ch in 0..c {
                    let base = (b * c + ch) * hw;
                    for k in base..base + hw {
                        xhat[k] = (x[k] - mean[ch]) * inv_std[ch];
                        y[k] = gamma[ch] * xhat[k] + beta[ch];
                    }
                }
            }
            let cache = (mode == Mode::Train).then_some(BnCache { xhat, inv_std, mean, var, count });
            (y, cache)
        }
        Layer::Relu => (x.iter().map(|v| v.max(0.0)).collect(), None),
        Layer::ChannelMeanPool => {
            let hw = shape.height * shape.width;
            let c = shape.channels;
            let mut y = vec![0.0; batch * hw];
            for b in 0..batch {
                let out = &mut y[b * hw..(b + 1) * hw];
                for ch in 0..c {
                    let base = (b * c + ch) * hw;
                    out.iter_mut().zip(&x[base..base + hw]).for_each(|(o, v)| *o += v);
                }
                out.iter_mut().for_each(|o| *o /= c as f64);
            }
            (y, None)
        }
        Layer::Dense { inputs, outputs, weight, bias } => {
            let mut y = vec![0.0; batch * outputs];
            for b in 0..batch {
                let xb = &x[b * inputs..(b + 1) * inputs];
                for o in 0..*outputs {
                    let w = &weight[o * inputs..(o + 1) * inputs];
                    y[b * outputs + o] = bias[o] + w.iter().zip(xb).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            (y, None)
        }
    }
}

/// Row ranges of the output plane that read in-bounds input for a kernel
/// offset `d` along an axis of length `n`.
fn valid_range(d: isize, n: usize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    lo..hi.max(lo)
}

/// Unfolds one sample into `(in_c·kh·kw) × (h·w)` patch columns.
fn im2col(x: &[f64], in_c: usize, (kh, kw): (usize, usize), h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut col = vec![0.0; in_c * kh * kw * hw];
    for i in 0..in_c {
        let plane = &x[i * hw..(i + 1) * hw];
        for ky in 0..kh {
            let dy = ky as isize - (kh / 2) as isize;
            for kx in 0..kw {
                let dx = kx as isize - (kw / 2) as isize;
                let row = &mut col[((i * kh + ky) * kw + kx) * hw..][..hw];
                let xr = valid_range(dx, w);
                for yy in valid_range(dy, h) {
                    let src = (yy as isize + dy) as usize * w;
                    for xx in xr.clone() {
                        row[yy * w + xx] = plane[src + (xx as isize + dx) as usize];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of `im2col`.
fn col2im(col: &[f64], in_c: usize, (kh, kw): (usize, usize), h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut x = vec![0.0; in_c * hw];
    for i in 0..in_c {
        for ky in 0..kh {
            let dy = ky as isize - (kh / 2) as isize;
            for kx in 0..kw {
                let dx = kx as isize - (kw / 2) as isize;
                let row = &col[((i * kh + ky) * kw + kx) * hw..][..hw];
                let plane = &mut x[i * hw..(i + 1) * hw];
                let xr = valid_range(dx, w);
                for yy in valid_range(dy, h) {
                    let src = (yy as isize + dy) as usize * w;
                    for xx in xr.clone() {
                        plane[src + (xx as isize + dx) as usize] += row[yy * w + xx];
                    }
                }
            }
        }
    }
    x
}

// Samples are processed in parallel; per-sample weight gradients are summed
// in sample order so results do not depend on the thread count.

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    batch: usize,
    in_c: usize,
    out_c: usize,
    kernel: (usize, usize),
    shape: Shape,
) -> Vec<f64> {
    let (h, w) = (shape.height, shape.width);
    let hw = h * w;
    let rows = in_c * kernel.0 * kernel.1;
    let mut y = vec![0.0; batch * out_c * hw];
    y.par_chunks_mut(out_c * hw)
        .zip(x.par_chunks(in_c * hw))
        .with_min_len(4)
        .for_each(|(out, xb)| {
            let col = im2col(xb, in_c, kernel, h, w);
            for o in 0..out_c {
                let orow = &mut out[o * hw..(o + 1) * hw];
                orow.iter_mut().for_each(|v| *v = bias[o]);
                for r in 0..rows {
                    let wv = weight[o * rows + r];
                    orow.iter_mut().zip(&col[r * hw..(r + 1) * hw]).for_each(|(v, c)| *v += wv * c);
                }
            }
        });
    debug_assert_eq!(batch * in_c * hw, x.len());
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    g: &[f64],
    weight: &[f64],
    batch: usize,
    in_c: usize,
    out_c: usize,
    kernel: (usize, usize),
    shape: Shape,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (h, w) = (shape.height, shape.width);
    let hw = h * w;
    let rows = in_c * kernel.0 * kernel.1;
    let per_sample: Vec<(Vec<f64>, Vec<f64>)> = x
        .par_chunks(in_c * hw)
        .zip(g.par_chunks(out_c * hw))
        .with_min_len(4)
        .map(|(xb, gb)| {
            let col = im2col(xb, in_c, kernel, h, w);
            let mut gw = vec![0.0; weight.len()];
            let mut gcol = vec![0.0; rows * hw];
            for o in 0..out_c {
                let go = &gb[o * hw..(o + 1) * hw];
                for r in 0..rows {
                    let crow = &col[r * hw..(r + 1) * hw];
                    gw[o * rows + r] = go.iter().zip(crow).map(|(a, b)| a * b).sum();
                    let wv = weight[o * rows + r];
                    gcol[r * hw..(r + 1) * hw].iter_mut().zip(go).for_each(|(c, v)| *c += wv * v);
                }
            }
            (col2im(&gcol, in_c, kernel, h, w), gw)
        })
        .collect();
    let mut gx = Vec::with_capacity(x.len());
    let mut gw = vec![0.0; weight.len()];
    for (gxb, gwb) in &per_sample {
        gx.extend_from_slice(gxb);
        gw.iter_mut().zip(gwb).for_each(|(a, b)| *a += b);
    }
    let mut gbias = vec![0.0; out_c];
    for b in 0..batch {
        for (o, acc) in gbias.iter_mut().enumerate() {
            *acc += g[(b * out_c + o) * hw..(b * out_c + o + 1) * hw].iter().sum::<f64>();
        }
    }
    (gx, gw, gbias)
}

fn bn_backward(
    g: &[f64],
    c: &BnCache,
    gamma: &[f64],
    batch: usize,
    channels: usize,
    shape: Shape,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hw = shape.height * shape.width;
    let m = c.count as f64;
    let mut gx = vec![0.0; g.len()];
    let mut ggamma = vec![0.0; channels];
    let mut gbeta = vec![0.0; channels];
    for ch in 0..channels {
        let idx = |b: usize| (b * channels + ch) * hw..(b * channels + ch + 1) * hw;
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for b in 0..batch {
            for k in idx(b) {
                sum_g += g[k];
                sum_gx += g[k] * c.xhat[k];
            }
        }
        gbeta[ch] = sum_g;
        ggamma[ch] = sum_gx;
        let scale = gamma[ch] * c.inv_std[ch] / m;
        for b in 0..batch {
            for k in idx(b) {
                gx[k] = scale * (m * g[k] - sum_g - c.xhat[k] * sum_gx);
            }
        }
    }
    (gx, ggamma, gbeta)
}
