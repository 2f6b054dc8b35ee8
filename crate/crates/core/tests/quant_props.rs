use greenlite_core::container;
use greenlite_core::graph::build_model;
use greenlite_core::quant::{
    calibrate, choose_params, choose_weight_params, dequantize, dequantize_slice, quantize_model, quantize_slice,
    quantize_tensor, quantized_conv2d, reduction_percent, QuantConv, QuantParams, QuantScheme, QuantizedModel,
    QuantizedTensor,
};
use greenlite_core::tensor::{conv2d, ConvSpec};
use greenlite_core::{Error, Shape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID_POINTS: usize = 200_001;

/// Representable interval of a per-tensor encoding.
fn representable(p: &QuantParams) -> (f64, f64) {
    let (s, z) = (p.scale[0] as f64, p.zero_point[0] as f64);
    (s * (-128.0 - z), s * (127.0 - z))
}

fn check_grid(min: f32, max: f32) {
    let p = choose_params(min, max, QuantScheme::PerTensorAffine).unwrap();
    let (lo, hi) = representable(&p);
    let (lo, hi) = (lo.max(min.min(0.0) as f64), hi.min(max.max(0.0) as f64));
    let half = p.scale[0] / 2.0;
    for i in 0..GRID_POINTS {
        let x = (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64) as f32;
        let back = p.dequantize_value(p.quantize_value(x, 0), 0);
        assert!((back - x).abs() <= half + f32::EPSILON * x.abs(), "[{min}, {max}] x={x} back={back}");
    }
}

#[test]
fn affine_round_trip_within_half_scale_on_fine_grid() {
    for (min, max) in [(0.0, 2.55), (-1.0, 1.0), (-3.7, 0.2), (0.5, 9.0), (-6.0, -0.25), (-1e-3, 4e-3), (-250.0, 17.0)] {
        check_grid(min, max);
    }
}

#[test]
fn symmetric_round_trip_within_half_scale_on_fine_grid() {
    let p = choose_params(-2.0, 1.0, QuantScheme::PerChannelSymmetric).unwrap();
    assert_eq!(p.scale[0], 2.0 / 127.0);
    assert_eq!(p.zero_point[0], 0);
    for i in 0..GRID_POINTS {
        let x = -2.0 + 4.0 * i as f32 / (GRID_POINTS - 1) as f32;
        let back = p.dequantize_value(p.quantize_value(x, 0), 0);
        assert!((back - x).abs() <= p.scale[0] / 2.0 + f32::EPSILON * 2.0, "x={x}");
    }
}

#[test]
fn formula_examples() {
    let p = QuantParams::per_tensor(0.1, 0).unwrap();
    assert_eq!(p.quantize_value(1.234, 0), 12);
    let p = choose_params(0.0, 2.55, QuantScheme::PerTensorAffine).unwrap();
    assert!((p.scale[0] - 0.01).abs() < 1e-9);
    assert_eq!(p.dequantize_value(p.zero_point[0] as i8, 0), 0.0);
    assert!(matches!(choose_params(0.0, 0.0, QuantScheme::PerTensorAffine), Err(Error::DegenerateRange { .. })));
    assert_eq!(format!("{:.1}", reduction_percent(6.1, 3.5)), "42.6");
}

proptest! {
    #[test]
    fn zero_is_exactly_representable(a in -100.0f32..100.0, b in -100.0f32..100.0) {
        prop_assume!(a != 0.0 || b != 0.0);
        let p = choose_params(a.min(b), a.max(b), QuantScheme::PerTensorAffine).unwrap();
        prop_assert_eq!(p.dequantize_value(p.zero_point[0] as i8, 0), 0.0);
        prop_assert_eq!(p.quantize_value(0.0, 0) as i32, p.zero_point[0]);
    }

    #[test]
    fn dequantize_is_monotone(a in -50.0f32..0.0, b in 0.01f32..50.0, q1 in any::<i8>(), q2 in any::<i8>()) {
        let p = choose_params(a, b, QuantScheme::PerTensorAffine).unwrap();
        let (lo, hi) = (q1.min(q2), q1.max(q2));
        prop_assert!(p.dequantize_value(lo, 0) <= p.dequantize_value(hi, 0));
    }

    #[test]
    fn grid_points_are_fixed(scale in 1e-4f32..10.0, z in -128i32..=127, k in -255i32..=255) {
        prop_assume!((-128..=127).contains(&(k + z)));
        let p = QuantParams::per_tensor(scale, z).unwrap();
        let x = p.dequantize_value((k + z) as i8, 0);
        prop_assert_eq!(p.quantize_value(x, 0) as i32, k + z);
    }
}

#[test]
fn quantized_conv_within_one_output_quantum_of_float_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for _ in 0..60 {
        let (cin, cout) = (rng.gen_range(1..5), rng.gen_range(1..6));
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let stride = rng.gen_range(1..3);
        let pad = rng.gen_range(0..=k / 2);
        let s = Shape::new(1, cin, rng.gen_range(k..k + 8), rng.gen_range(k..k + 8)).unwrap();
        let x = Tensor::from_fn(s, |_, _, _, _| rng.gen_range(-1.5f32..2.5));
        let w: Vec<f32> = (0..cout * cin * k * k).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let b: Vec<f32> = (0..cout).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let spec = ConvSpec::new(cin, cout, k, stride, pad, 1, w, b).unwrap();

        let in_p = choose_params(-1.5, 2.5, QuantScheme::PerTensorAffine).unwrap();
        let qx = quantize_tensor(&x, &in_p).unwrap();
        let qc = QuantConv::from_float(&spec, in_p.scale[0]).unwrap();
        let float_out = conv2d(&x, &spec).unwrap();
        let (lo, hi) = float_out.data().iter().fold((0f32, 0f32), |(l, h), &v| (l.min(v), h.max(v)));
        let out_p = choose_params(lo, hi, QuantScheme::PerTensorAffine).unwrap();
        let got = dequantize(&quantized_conv2d(&qx, &qc, &out_p).unwrap());

        // float conv over the dequantized operands
        let wd = dequantize_slice(&qc.weights, &qc.weight_params);
        let bd: Vec<f32> = qc
            .bias
            .iter()
            .enumerate()
            .map(|(c, &v)| (v as f64 * in_p.scale[0] as f64 * qc.weight_params.scale[c] as f64) as f32)
            .collect();
        let ref_spec = ConvSpec::new(cin, cout, k, stride, pad, 1, wd, bd).unwrap();
        let want = conv2d(&dequantize(&qx), &ref_spec).unwrap();
        let (rlo, rhi) = representable(&out_p);
        for (g, w) in got.data().iter().zip(want.data()) {
            let clipped = (*w as f64).clamp(rlo, rhi);
            assert!((*g as f64 - clipped).abs() <= out_p.scale[0] as f64 * (1.0 + 1e-6), "{g} vs {w}");
        }
    }
}

#[test]
fn per_channel_weights_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let data: Vec<f32> = (0..6 * 27).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let p = choose_weight_params(&data, 6).unwrap();
    assert!(p.zero_point.iter().all(|&z| z == 0));
    let back = dequantize_slice(&quantize_slice(&data, &p).unwrap(), &p);
    for (i, (a, b)) in data.iter().zip(&back).enumerate() {
        assert!((a - b).abs() <= p.scale[i / 27] / 2.0 + 1e-7);
    }
    let zeros = choose_weight_params(&[0.0; 8], 2).unwrap();
    assert!(zeros.scale.iter().all(|&s| s > 0.0));
}

fn small_model() -> greenlite_core::ModelGraph {
    build_model(3, 0.25, 0.33, 64, 9).unwrap()
}

fn images(n: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Tensor::from_fn(Shape::new(1, 3, 64, 64).unwrap(), |_, _, _, _| rng.gen_range(0.0f32..1.0)))
        .collect()
}

#[test]
fn calibration_merges_and_ignores_order() {
    let m = small_model();
    let imgs = images(3, 1);
    let both = calibrate(&m, &imgs[..2]).unwrap();
    let mut merged = calibrate(&m, &imgs[..1]).unwrap();
    merged.merge(&calibrate(&m, &imgs[1..2]).unwrap());
    assert_eq!(both, merged);
    let rev: Vec<Tensor> = imgs.iter().rev().cloned().collect();
    assert_eq!(calibrate(&m, &imgs).unwrap(), calibrate(&m, &rev).unwrap());
    let zero = calibrate(&m, &[Tensor::zeros(Shape::new(1, 3, 64, 64).unwrap())]).unwrap();
    assert!(zero.slots.values().all(|s| s.min <= 0.0 && 0.0 <= s.max));
    assert!(calibrate(&m, &[]).is_err());
}

#[test]
fn quantize_is_deterministic_and_reloads() {
    let m = small_model();
    let stats = calibrate(&m, &images(4, 2)).unwrap();
    let a = quantize_model(&m, &stats).unwrap().to_container().unwrap();
    let b = quantize_model(&m, &stats).unwrap().to_container().unwrap();
    assert_eq!(a, b);
    let q = QuantizedModel::from_container(&a).unwrap();
    assert_eq!(q.to_container().unwrap(), a);
    let x = &images(1, 3)[0];
    let y = q.forward(x).unwrap();
    assert_eq!(y.shape(), Shape::new(1, 7, 2, 2).unwrap());
    assert!(y.is_finite());
    assert!(a.len() as f64 <= 0.35 * container::save_float(&m).unwrap().len() as f64);
}

#[test]
fn missing_slots_are_listed() {
    let m = small_model();
    let mut stats = calibrate(&m, &images(1, 4)).unwrap();
    let dropped: Vec<String> = stats.slots.keys().filter(|k| k.contains("cbam") || k.starts_with("head.cls")).cloned().collect();
    assert!(!dropped.is_empty());
    for k in &dropped {
        stats.slots.remove(k);
    }
    match quantize_model(&m, &stats) {
        Err(Error::CalibrationCoverage(slots)) => {
            assert!(!slots.is_empty());
            assert!(slots.iter().all(|s| dropped.contains(s)), "{slots:?}");
        }
        other => panic!("expected a coverage error, got {other:?}"),
    }
}

#[test]
fn quantized_tensor_rejects_bad_length() {
    let p = QuantParams::per_tensor(0.5, 3).unwrap();
    assert!(QuantizedTensor::new(Shape::new(1, 1, 2, 2).unwrap(), vec![0; 3], p).is_err());
}
