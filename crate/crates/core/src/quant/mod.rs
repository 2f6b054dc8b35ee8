//! Post-training int8 quantization.

mod calibrate;
mod conv;
mod model;
mod params;

pub use calibrate::{calibrate, calibrate_percentile, CalibrationStats, SlotStats, INPUT_SLOT};
pub use conv::{quantized_conv2d, QuantConv};
pub use model::{quantize_model, QKind, QLayer, QuantizedModel};
pub use params::{
    choose_params, choose_weight_params, dequantize, dequantize_slice, quantize_slice, quantize_tensor,
    round_half_away, QuantParams, QuantScheme, QuantizedTensor,
};

/// Size reduction in percent, `(1 - quantized / float) * 100`.
pub fn reduction_percent(float_size: f64, quantized_size: f64) -> f64 {
    (1.0 - quantized_size / float_size) * 100.0
}
