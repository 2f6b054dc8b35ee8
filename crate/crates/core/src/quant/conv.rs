use super::params::{choose_weight_params, clamp_i8, quantize_slice, round_half_away, QuantParams, QuantScheme};
use super::QuantizedTensor;
use crate::error::{contract, Result};
use crate::profile::memory::TrackedBuf;
use crate::tensor::{valid_range, ConvGeometry, ConvSpec};

/// int8 convolution: per-output-channel symmetric weights and an int32 bias
/// whose scale is `input_scale * weight_scale[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantConv {
    pub geometry: ConvGeometry,
    pub weights: Vec<i8>,
    pub weight_params: QuantParams,
    pub bias: Vec<i32>,
    pub input_scale: f32,
}

impl QuantConv {
    pub fn new(
        geometry: ConvGeometry,
        weights: Vec<i8>,
        weight_params: QuantParams,
        bias: Vec<i32>,
        input_scale: f32,
    ) -> Result<Self> {
        geometry.validate(weights.len(), bias.len())?;
        if weight_params.scheme != QuantScheme::PerChannelSymmetric || weight_params.channels() != geometry.out_channels {
            contract!("conv weights need per-channel symmetric params for {} channels", geometry.out_channels);
        }
        if !(input_scale > 0.0) {
            contract!("conv input scale must be positive");
        }
        Ok(Self { geometry, weights, weight_params, bias, input_scale })
    }

    /// Quantizes float weights per output channel and the bias to int32 for
    /// inputs encoded with `input_scale`.
    pub fn from_float(spec: &ConvSpec, input_scale: f32) -> Result<Self> {
        let g = spec.geometry();
        let weight_params = choose_weight_params(&spec.weights, g.out_channels)?;
        let weights = quantize_slice(&spec.weights, &weight_params)?;
        let bias = spec
            .bias
            .iter()
            .zip(&weight_params.scale)
            .map(|(&b, &sw)| {
                let q = round_half_away(b as f64 / (input_scale as f64 * sw as f64));
                q.clamp(i32::MIN as f64, i32::MAX as f64) as i32
            })
            .collect();
        Self::new(g, weights, weight_params, bias, input_scale)
    }

    /// Requantization multiplier `s_in * s_w[c] / s_out` per output channel.
    pub fn multipliers(&self, output_scale: f32) -> Vec<f64> {
        self.weight_params
            .scale
            .iter()
            .map(|&sw| self.input_scale as f64 * sw as f64 / output_scale as f64)
            .collect()
    }
}

/// Integer convolution with int32 accumulation of `(q_in - z_in) * q_w`
/// plus the int32 bias, requantized to `output_params`.
pub fn quantized_conv2d(
    input: &QuantizedTensor,
    conv: &QuantConv,
    output_params: &QuantParams,
) -> Result<QuantizedTensor> {
    let g = &conv.geometry;
    if input.params().channels() != 1 || output_params.channels() != 1 {
        contract!("quantized conv needs per-tensor input and output params");
    }
    let (s_in, z_in) = input.affine();
    if s_in != conv.input_scale {
        contract!("input scale {s_in} does not match the scale {} the bias was built for", conv.input_scale);
    }
    let os = g.output_shape(input.shape())?;
    let is = input.shape();
    let z_out = output_params.zero_point[0] as i64;
    let mult = conv.multipliers(output_params.scale[0]);
    let k = g.kernel_size;
    let cin_g = g.in_channels / g.groups;
    let cout_g = g.out_channels / g.groups;
    let pad = g.padding as isize;
    let src = input.data();

    let mut out = vec![0i8; os.numel()];
    let mut acc = TrackedBuf::new(vec![0i32; os.plane()]);
    for n in 0..is.n {
        for oc in 0..g.out_channels {
            let group = oc / cout_g;
            acc.fill(conv.bias[oc]);
            for icg in 0..cin_g {
                let ic = group * cin_g + icg;
                let off = is.index(n, ic, 0, 0);
                let in_plane = &src[off..off + is.plane()];
                let w_base = (oc * cin_g + icg) * k * k;
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = conv.weights[w_base + kh * k + kw] as i32;
                        if wv == 0 {
                            continue;
                        }
                        let x_off = kw as isize - pad;
                        let (x_lo, x_hi) = valid_range(os.w, g.stride, x_off, is.w as isize);
                        for oy in 0..os.h {
                            let iy = (oy * g.stride) as isize + kh as isize - pad;
                            if iy < 0 || iy >= is.h as isize {
                                continue;
                            }
                            let in_row = &in_plane[iy as usize * is.w..(iy as usize + 1) * is.w];
                            let acc_row = &mut acc[oy * os.w..(oy + 1) * os.w];
                            if g.stride == 1 {
                                let start = (x_lo as isize + x_off) as usize;
                                let src_row = &in_row[start..start + (x_hi - x_lo)];
                                for (a, &q) in acc_row[x_lo..x_hi].iter_mut().zip(src_row) {
                                    *a += wv * (q as i32 - z_in);
                                }
                            } else {
                                for ox in x_lo..x_hi {
                                    let ix = ((ox * g.stride) as isize + x_off) as usize;
                                    acc_row[ox] += wv * (in_row[ix] as i32 - z_in);
                                }
                            }
                        }
                    }
                }
            }
            let m = mult[oc];
            let base = os.index(n, oc, 0, 0);
            for (o, &a) in out[base..base + os.plane()].iter_mut().zip(acc.iter()) {
                *o = clamp_i8(round_half_away(a as f64 * m) as i64 + z_out);
            }
        }
    }
    drop(acc);
    QuantizedTensor::new(os, out, output_params.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::quantize_tensor;
    use crate::tensor::Shape;
    use crate::tensor::Tensor;

    #[test]
    fn zero_weights_give_output_zero_point() {
        let spec = ConvSpec::new(2, 3, 3, 1, 1, 1, vec![0.0; 54], vec![0.0; 3]).unwrap();
        let in_p = QuantParams::per_tensor(0.05, 10).unwrap();
        let out_p = QuantParams::per_tensor(0.02, -5).unwrap();
        let x = Tensor::from_fn(Shape::new(1, 2, 4, 4).unwrap(), |_, c, y, x| (c + y + x) as f32 * 0.1);
        let qx = quantize_tensor(&x, &in_p).unwrap();
        let conv = QuantConv::from_float(&spec, 0.05).unwrap();
        let y = quantized_conv2d(&qx, &conv, &out_p).unwrap();
        assert!(y.data().iter().all(|&q| q == -5));
    }

    #[test]
    fn unit_weight_identity_is_lossless() {
        // s_in = s_w = s_out and all zero points 0: q_out = round(q_in * q_w * s_w) = q_in when q_w * s_w = 1
        let in_p = QuantParams::per_tensor(1.0 / 127.0, 0).unwrap();
        let spec = ConvSpec::new(1, 1, 1, 1, 0, 1, vec![1.0], vec![0.0]).unwrap();
        let conv = QuantConv::from_float(&spec, 1.0 / 127.0).unwrap();
        assert_eq!(conv.weight_params.scale, vec![1.0 / 127.0]);
        let q: Vec<i8> = (-128..=127).map(|v| v as i8).collect();
        let qx = QuantizedTensor::new(Shape::new(1, 1, 16, 16).unwrap(), q.clone(), in_p.clone()).unwrap();
        let y = quantized_conv2d(&qx, &conv, &in_p).unwrap();
        assert_eq!(y.data(), q.as_slice());
    }

    #[test]
    fn scale_mismatch_is_rejected() {
        let spec = ConvSpec::new(1, 1, 1, 1, 0, 1, vec![1.0], vec![0.0]).unwrap();
        let conv = QuantConv::from_float(&spec, 0.5).unwrap();
        let qx = QuantizedTensor::new(Shape::new(1, 1, 1, 1).unwrap(), vec![1], QuantParams::per_tensor(0.25, 0).unwrap())
            .unwrap();
        assert!(quantized_conv2d(&qx, &conv, &QuantParams::per_tensor(0.25, 0).unwrap()).is_err());
    }
}
