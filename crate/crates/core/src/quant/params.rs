use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::profile::memory::TrackedBuf;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantScheme {
    PerTensorAffine,
    PerChannelSymmetric,
}

/// Scale(s) and zero point(s) of an int8 encoding. Per-channel parameters
/// index the leading axis of the quantized array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scheme: QuantScheme,
    #[serde(with = "crate::container::f32_vec_as_f64")]
    pub scale: Vec<f32>,
    pub zero_point: Vec<i32>,
}

/// Round half away from zero, the rounding mode used everywhere in the
/// int8 path.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

#[inline]
pub(crate) fn clamp_i8(v: i64) -> i8 {
    v.clamp(-128, 127) as i8
}

impl QuantParams {
    pub fn new(scheme: QuantScheme, scale: Vec<f32>, zero_point: Vec<i32>) -> Result<Self> {
        if scale.is_empty() || scale.len() != zero_point.len() {
            contract!("quant params need matching, non-empty scale and zero-point arrays");
        }
        if let Some(s) = scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            contract!("quantization scale must be positive and finite, got {s}");
        }
        if zero_point.iter().any(|z| !(-128..=127).contains(z)) {
            contract!("zero point outside [-128, 127]");
        }
        if scheme == QuantScheme::PerChannelSymmetric && zero_point.iter().any(|&z| z != 0) {
            contract!("symmetric quantization requires zero points of 0");
        }
        if scheme == QuantScheme::PerTensorAffine && scale.len() != 1 {
            contract!("per-tensor parameters must have exactly one scale");
        }
        Ok(Self { scheme, scale, zero_point })
    }

    pub fn per_tensor(scale: f32, zero_point: i32) -> Result<Self> {
        Self::new(QuantScheme::PerTensorAffine, vec![scale], vec![zero_point])
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    #[inline]
    pub fn quantize_value(&self, x: f32, channel: usize) -> i8 {
        let q = round_half_away(x as f64 / self.scale[channel] as f64) as i64 + self.zero_point[channel] as i64;
        clamp_i8(q)
    }

    #[inline]
    pub fn dequantize_value(&self, q: i8, channel: usize) -> f32 {
        (self.scale[channel] as f64 * (q as i32 - self.zero_point[channel]) as f64) as f32
    }
}

/// Parameters covering the observed range `[min, max]`.
///
/// Affine ranges are widened to include zero, so real 0 is always encoded
/// exactly by the zero point.
pub fn choose_params(min: f32, max: f32, scheme: QuantScheme) -> Result<QuantParams> {
    if !(min.is_finite() && max.is_finite()) || min > max {
        contract!("invalid range [{min}, {max}]");
    }
    if min == 0.0 && max == 0.0 {
        return Err(Error::DegenerateRange { min, max });
    }
    match scheme {
        QuantScheme::PerTensorAffine => {
            let lo = min.min(0.0) as f64;
            let hi = max.max(0.0) as f64;
            let scale = ((hi - lo) / 255.0) as f32;
            let z = (round_half_away(-lo / scale as f64) as i64 - 128).clamp(-128, 127) as i32;
            QuantParams::new(scheme, vec![scale], vec![z])
        }
        QuantScheme::PerChannelSymmetric => {
            let absmax = min.abs().max(max.abs());
            QuantParams::new(scheme, vec![(absmax as f64 / 127.0) as f32], vec![0])
        }
    }
}

/// Per-channel symmetric parameters for a weight array whose leading axis
/// has `channels` entries. All-zero channels get scale 1.
pub fn choose_weight_params(data: &[f32], channels: usize) -> Result<QuantParams> {
    if channels == 0 || data.len() % channels != 0 {
        contract!("weight array of {} values cannot be split into {channels} channels", data.len());
    }
    let per = data.len() / channels;
    let scale = data
        .chunks(per)
        .map(|ch| {
            let absmax = ch.iter().fold(0f32, |m, v| m.max(v.abs()));
            if absmax == 0.0 {
                1.0
            } else {
                (absmax as f64 / 127.0) as f32
            }
        })
        .collect();
    QuantParams::new(QuantScheme::PerChannelSymmetric, scale, vec![0; channels])
}

/// Quantizes a flat array whose leading axis has `params.channels()`
/// entries (or any length for per-tensor parameters).
pub fn quantize_slice(data: &[f32], params: &QuantParams) -> Result<Vec<i8>> {
    let channels = params.channels();
    if data.len() % channels != 0 {
        contract!("{} values cannot be split into {channels} channels", data.len());
    }
    let per = (data.len() / channels).max(1);
    Ok(data.iter().enumerate().map(|(i, &x)| params.quantize_value(x, i / per)).collect())
}

pub fn dequantize_slice(data: &[i8], params: &QuantParams) -> Vec<f32> {
    let per = (data.len() / params.channels()).max(1);
    data.iter().enumerate().map(|(i, &q)| params.dequantize_value(q, i / per)).collect()
}

/// int8 tensor with its encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    shape: Shape,
    data: TrackedBuf<i8>,
    params: QuantParams,
}

impl QuantizedTensor {
    pub fn new(shape: Shape, data: Vec<i8>, params: QuantParams) -> Result<Self> {
        if data.len() != shape.numel() {
            contract!("int8 data length {} does not match shape {shape}", data.len());
        }
        if params.channels() != 1 && params.channels() != shape.n {
            contract!("{} channel scales do not match leading axis {}", params.channels(), shape.n);
        }
        Ok(Self { shape, data: TrackedBuf::new(data), params })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn params(&self) -> &QuantParams {
        &self.params
    }

    /// Per-tensor (scale, zero point); panics on per-channel tensors.
    pub(crate) fn affine(&self) -> (f32, i32) {
        debug_assert_eq!(self.params.channels(), 1);
        (self.params.scale[0], self.params.zero_point[0])
    }
}

/// `q = clamp(round(x / scale) + zero_point, -128, 127)`.
pub fn quantize_tensor(x: &Tensor, params: &QuantParams) -> Result<QuantizedTensor> {
    let data = quantize_slice(x.data(), params)?;
    QuantizedTensor::new(x.shape(), data, params.clone())
}

/// `x = scale * (q - zero_point)`.
pub fn dequantize(q: &QuantizedTensor) -> Tensor {
    Tensor::new(q.shape, dequantize_slice(&q.data, &q.params)).expect("shape already validated")
}
