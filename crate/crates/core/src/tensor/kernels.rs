use serde::{Deserialize, Serialize};

use super::{Shape, Tensor};
use crate::error::{contract, Result};

/// Square-kernel 2-D convolution parameters.
///
/// `weights` is laid out as (out_channels, in_channels / groups, k, k).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        let geom = ConvGeometry { in_channels, out_channels, kernel_size, stride, padding, groups };
        geom.validate(weights.len(), bias.len())?;
        Ok(Self { in_channels, out_channels, kernel_size, stride, padding, groups, weights, bias })
    }

    pub(crate) fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel_size: self.kernel_size,
            stride: self.stride,
            padding: self.padding,
            groups: self.groups,
        }
    }
}

/// Hyper-parameters of a convolution without its weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn weight_len(&self) -> usize {
        self.out_channels * (self.in_channels / self.groups.max(1)) * self.kernel_size * self.kernel_size
    }

    pub(crate) fn validate(&self, weight_len: usize, bias_len: usize) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 || self.groups == 0 {
            contract!("kernel_size, stride and groups must be >= 1");
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            contract!("channel counts must be >= 1");
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            contract!(
                "channels ({} in, {} out) not divisible by groups {}",
                self.in_channels,
                self.out_channels,
                self.groups
            );
        }
        if weight_len != self.weight_len() {
            contract!("weights length {weight_len}, expected {}", self.weight_len());
        }
        if bias_len != self.out_channels {
            contract!("bias length {bias_len}, expected {}", self.out_channels);
        }
        Ok(())
    }

    /// Output shape for `input`, checking the channel count and spatial extent.
    pub(crate) fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.in_channels {
            contract!("input channels {} != conv in_channels {}", input.c, self.in_channels);
        }
        let out_h = out_dim("height", input.h, self.kernel_size, self.stride, self.padding)?;
        let out_w = out_dim("width", input.w, self.kernel_size, self.stride, self.padding)?;
        Shape::new(input.n, self.out_channels, out_h, out_w)
    }
}

pub(crate) fn out_dim(name: &str, input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        contract!("{name} {input} with padding {pad} is smaller than kernel {k}");
    }
    Ok((padded - k) / stride + 1)
}

/// Direct convolution. Accumulation order per output element is bias, then
/// input channel, kernel row, kernel column.
pub fn conv2d(input: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    conv2d_raw(input, &spec.geometry(), &spec.weights, &spec.bias)
}

pub(crate) fn conv2d_raw(input: &Tensor, g: &ConvGeometry, weights: &[f32], bias: &[f32]) -> Result<Tensor> {
    g.validate(weights.len(), bias.len())?;
    let os = g.output_shape(input.shape())?;
    let is = input.shape();
    let k = g.kernel_size;
    let cin_g = g.in_channels / g.groups;
    let cout_g = g.out_channels / g.groups;
    let (ih_n, iw_n) = (is.h as isize, is.w as isize);
    let pad = g.padding as isize;
    let mut out = vec![0f32; os.numel()];

    for n in 0..is.n {
        for oc in 0..g.out_channels {
            let group = oc / cout_g;
            let out_off = os.index(n, oc, 0, 0);
            let plane = &mut out[out_off..out_off + os.plane()];
            plane.fill(bias[oc]);
            for icg in 0..cin_g {
                let ic = group * cin_g + icg;
                let in_plane = input.plane(n, ic);
                let w_base = (oc * cin_g + icg) * k * k;
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = weights[w_base + kh * k + kw];
                        let (x_lo, x_hi) = valid_range(os.w, g.stride, kw as isize - pad, iw_n);
                        if x_lo >= x_hi {
                            continue;
                        }
                        for oy in 0..os.h {
                            let iy = (oy * g.stride) as isize + kh as isize - pad;
                            if iy < 0 || iy >= ih_n {
                                continue;
                            }
                            let in_row = &in_plane[iy as usize * is.w..(iy as usize + 1) * is.w];
                            let out_row = &mut plane[oy * os.w..(oy + 1) * os.w];
                            let x_off = kw as isize - pad;
                            if g.stride == 1 {
                                let start = (x_lo as isize + x_off) as usize;
                                let len = x_hi - x_lo;
                                for (o, &v) in out_row[x_lo..x_hi].iter_mut().zip(&in_row[start..start + len]) {
                                    *o += wv * v;
                                }
                            } else {
                                for ox in x_lo..x_hi {
                                    let ix = (ox * g.stride) as isize + x_off;
                                    out_row[ox] += wv * in_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(os, out)
}

/// Output columns `[lo, hi)` whose source column `ox * stride + offset` lies in `[0, limit)`.
#[inline]
pub(crate) fn valid_range(out_len: usize, stride: usize, offset: isize, limit: isize) -> (usize, usize) {
    let s = stride as isize;
    // smallest ox with ox*s + offset >= 0
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    // largest ox with ox*s + offset <= limit - 1
    let last = limit - 1 - offset;
    if last < 0 {
        return (0, 0);
    }
    let hi = ((last / s) + 1).min(out_len as isize);
    (lo.min(out_len as isize) as usize, hi.max(0) as usize)
}

/// Inference-mode batch normalization, applied per channel.
pub fn batchnorm_infer(
    input: &Tensor,
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
    eps: f32,
) -> Result<Tensor> {
    let s = input.shape();
    if !(eps > 0.0) {
        contract!("batch-norm eps must be > 0, got {eps}");
    }
    for (name, len) in [
        ("gamma", gamma.len()),
        ("beta", beta.len()),
        ("running_mean", running_mean.len()),
        ("running_var", running_var.len()),
    ] {
        if len != s.c {
            contract!("batch-norm {name} length {len} != channels {}", s.c);
        }
    }
    let mut out = input.to_vec();
    let plane = s.plane();
    for n in 0..s.n {
        for c in 0..s.c {
            let denom = (running_var[c] + eps).sqrt();
            let off = s.index(n, c, 0, 0);
            for v in &mut out[off..off + plane] {
                *v = gamma[c] * (*v - running_mean[c]) / denom + beta[c];
            }
        }
    }
    Tensor::new(s, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Sigmoid,
    Identity,
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Silu => silu(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|v| kind.apply(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Windowed pooling. Padded cells never contribute: max-pool treats them as
/// negative infinity and avg-pool divides by the number of valid cells.
pub fn pool(input: &Tensor, kind: PoolKind, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    if kernel == 0 || stride == 0 {
        contract!("pool kernel and stride must be >= 1");
    }
    if 2 * padding > kernel {
        contract!("pool padding {padding} exceeds half the kernel {kernel}");
    }
    let s = input.shape();
    let oh = out_dim("height", s.h, kernel, stride, padding)?;
    let ow = out_dim("width", s.w, kernel, stride, padding)?;
    let os = Shape::new(s.n, s.c, oh, ow)?;
    let mut out = Vec::with_capacity(os.numel());
    let pad = padding as isize;
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            for oy in 0..oh {
                let y0 = (oy * stride) as isize - pad;
                let ys = y0.max(0) as usize..((y0 + kernel as isize).min(s.h as isize)) as usize;
                for ox in 0..ow {
                    let x0 = (ox * stride) as isize - pad;
                    let xs = x0.max(0) as usize..((x0 + kernel as isize).min(s.w as isize)) as usize;
                    let v = match kind {
                        PoolKind::Max => {
                            let mut m = f32::NEG_INFINITY;
                            for y in ys.clone() {
                                for x in xs.clone() {
                                    m = m.max(src[y * s.w + x]);
                                }
                            }
                            m
                        }
                        PoolKind::Avg => {
                            let mut acc = 0f32;
                            for y in ys.clone() {
                                for x in xs.clone() {
                                    acc += src[y * s.w + x];
                                }
                            }
                            acc / (ys.len() * xs.len()) as f32
                        }
                    };
                    out.push(v);
                }
            }
        }
    }
    Tensor::new(os, out)
}

/// Per-channel max or mean over all spatial positions, shape (n, c, 1, 1).
pub fn global_pool(input: &Tensor, kind: PoolKind) -> Tensor {
    let s = input.shape();
    let mut out = Vec::with_capacity(s.n * s.c);
    for n in 0..s.n {
        for c in 0..s.c {
            let p = input.plane(n, c);
            out.push(match kind {
                PoolKind::Max => p.iter().copied().fold(f32::NEG_INFINITY, f32::max),
                PoolKind::Avg => (canonical_sum(p) / p.len() as f64) as f32,
            });
        }
    }
    Tensor { shape: Shape { n: s.n, c: s.c, h: 1, w: 1 }, data: crate::profile::memory::TrackedBuf::new(out) }
}

/// Sum of `values` in ascending order, accumulated in f64. The result does
/// not depend on the order the values are supplied in.
pub(crate) fn canonical_sum(values: &[f32]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    sorted.iter().map(|&v| v as f64).sum()
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    concat_many(&[a, b])
}

/// Channel concatenation of any number of tensors, in argument order.
pub fn concat_many(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        contract!("concat needs at least one input");
    };
    let f = first.shape();
    let mut channels = 0;
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (f.n, f.h, f.w) {
            contract!("concat shape mismatch: {s} vs {f}");
        }
        channels += s.c;
    }
    let os = Shape::new(f.n, channels, f.h, f.w)?;
    let mut out = Vec::with_capacity(os.numel());
    for n in 0..f.n {
        for p in parts {
            let s = p.shape();
            let start = s.index(n, 0, 0, 0);
            out.extend_from_slice(&p.data()[start..start + s.c * s.plane()]);
        }
    }
    Tensor::new(os, out)
}

/// Elementwise sum of two same-shaped tensors.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        contract!("add shape mismatch: {} vs {}", a.shape(), b.shape());
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape(), data)
}

pub fn upsample_nearest2x(input: &Tensor) -> Tensor {
    let s = input.shape();
    let os = Shape { n: s.n, c: s.c, h: s.h * 2, w: s.w * 2 };
    Tensor::from_fn(os, |n, c, y, x| input.at(n, c, y / 2, x / 2))
}
