//! Shared fixtures for the criterion benches.

use greenlite_core::graph::{build_model, BBox, Detection, ModelGraph};
use greenlite_core::quant::{calibrate, quantize_model};
use greenlite_core::{QuantizedModel, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: Shape, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(0.0f32..1.0))
}

/// The default seven-class model at `input_size`, plus its int8 version
/// calibrated on `calib` random images.
pub fn desk_models(input_size: usize, calib: usize) -> (ModelGraph, QuantizedModel) {
    let model = build_model(7, 0.25, 0.33, input_size, 42).expect("valid model");
    let shape = Shape::new(1, 3, input_size, input_size).expect("valid shape");
    let images: Vec<Tensor> = (0..calib as u64).map(|i| random_tensor(shape, i)).collect();
    let stats = calibrate(&model, &images).expect("calibration");
    let q = quantize_model(&model, &stats).expect("quantization");
    (model, q)
}

/// `n` overlapping detections over `classes` classes.
pub fn random_detections(n: usize, classes: usize, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (x, y) = (rng.gen_range(0.0f32..600.0), rng.gen_range(0.0f32..600.0));
            let (w, h) = (rng.gen_range(8.0f32..80.0), rng.gen_range(8.0f32..80.0));
            Detection { class_id: rng.gen_range(0..classes), score: rng.gen_range(0.0..1.0), bbox: BBox::new(x, y, x + w, y + h) }
        })
        .collect()
}
