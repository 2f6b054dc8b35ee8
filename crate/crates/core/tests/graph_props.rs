use std::collections::HashMap;

use greenlite_core::cbam::cbam_forward;
use greenlite_core::container::{self, ALIGN};
use greenlite_core::graph::{
    build_model, decode, letterbox, Layer, LayerKind, LetterboxMeta, ModelGraph, ParamArray, HEAD_STRIDE,
};
use greenlite_core::profile::track_memory;
use greenlite_core::quant::{calibrate, quantize_model};
use greenlite_core::tensor::{
    activation, add, batchnorm_infer, concat_many, conv2d, global_pool, pool, upsample_nearest2x,
};
use greenlite_core::{Shape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// SHA-256 of the little-endian f32 bytes of the seed-42 default model's
/// head output on `fixed_image(320)`.
const GOLDEN_HEAD_SHA256: &str = "5bf0a21ca94171599f81e6007bfaf6d23c050ab94f1d73dbe245b5689ea29912";

fn fixed_image(s: usize) -> Tensor {
    Tensor::from_fn(Shape::new(1, 3, s, s).unwrap(), |_, c, y, x| ((x * 7 + y * 13 + c * 31) % 256) as f32 / 255.0)
}

fn random_image(s: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(Shape::new(1, 3, s, s).unwrap(), |_, _, _, _| rng.gen_range(0.0f32..1.0))
}

/// Evaluates a layer list keeping every activation alive, using the public
/// kernels directly.
fn replay(m: &ModelGraph, layers: &[Layer], input: &Tensor) -> Vec<Tensor> {
    let p = |name: &str| -> &[f32] { &m.param(name).unwrap().data };
    let mut vals: Vec<Tensor> = vec![input.clone()];
    for layer in &layers[1..] {
        let args: Vec<&Tensor> = layer.inputs.iter().map(|&i| &vals[i]).collect();
        let n = &layer.name;
        let out = match &layer.kind {
            LayerKind::Input => unreachable!(),
            LayerKind::Conv { geometry } => conv2d(args[0], &m.conv_spec(n, geometry).unwrap()).unwrap(),
            LayerKind::Bn { eps } => batchnorm_infer(
                args[0],
                p(&format!("{n}.gamma")),
                p(&format!("{n}.beta")),
                p(&format!("{n}.mean")),
                p(&format!("{n}.var")),
                *eps,
            )
            .unwrap(),
            LayerKind::Act { kind } => activation(args[0], *kind),
            LayerKind::Pool { kind, kernel, stride, padding } => {
                pool(args[0], *kind, *kernel, *stride, *padding).unwrap()
            }
            LayerKind::GlobalPool { kind } => global_pool(args[0], *kind),
            LayerKind::Concat => concat_many(&args).unwrap(),
            LayerKind::Add => add(args[0], args[1]).unwrap(),
            LayerKind::Upsample => upsample_nearest2x(args[0]),
            LayerKind::Cbam { channels, reduction, spatial_kernel } => {
                cbam_forward(args[0], &m.cbam_params(n, *channels, *reduction, *spatial_kernel).unwrap()).unwrap()
            }
            LayerKind::DetectHead { body, box_out, cls_out, .. } => {
                let inner = replay(m, body, args[0]);
                concat_many(&[&inner[*box_out], &inner[*cls_out]]).unwrap()
            }
        };
        vals.push(out);
    }
    vals
}

#[test]
fn forward_matches_layer_replay() {
    let m = build_model(5, 0.25, 0.33, 96, 11).unwrap();
    let x = random_image(96, 1);
    let want = replay(&m, m.layers(), &x).pop().unwrap();
    let got = m.forward(&x).unwrap();
    assert_eq!(got, want);
}

#[test]
fn seed_42_default_model_is_bit_stable() {
    let m = build_model(7, 0.25, 0.33, 320, 42).unwrap();
    let x = fixed_image(320);
    let a = m.forward(&x).unwrap();
    assert_eq!(a.shape(), Shape::new(1, 11, 10, 10).unwrap());
    assert_eq!(a, m.forward(&x).unwrap());
    let bytes: Vec<u8> = a.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    let digest = hex::encode(Sha256::digest(&bytes));
    assert_eq!(digest, GOLDEN_HEAD_SHA256);
}

#[test]
fn container_size_recounts_from_weight_store() {
    let m = build_model(7, 0.25, 0.33, 320, 42).unwrap();
    let bytes = container::save_float(&m).unwrap();
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let mut payload = 0usize;
    let mut params = 0usize;
    let mut padded = 0usize;
    for p in m.weights().values() {
        let n: usize = p.shape.iter().product();
        params += n;
        payload += n * 4;
        padded = (padded + n * 4).div_ceil(ALIGN) * ALIGN;
    }
    assert_eq!(params, m.parameter_count());
    assert!(payload <= bytes.len());
    // the final payload is not padded
    let last = m.weights().values().last().unwrap().data.len() * 4;
    let tail_pad = (ALIGN - last % ALIGN) % ALIGN;
    assert_eq!(bytes.len(), (8 + header_len).div_ceil(ALIGN) * ALIGN + padded - tail_pad);
    assert_eq!(bytes.len(), 6_673_216);
    assert_eq!(params, 1_659_390);
}

#[test]
fn raising_class_biases_raises_scores() {
    let m = build_model(4, 0.25, 0.33, 64, 5).unwrap();
    let x = random_image(64, 2);
    let before = m.forward(&x).unwrap();
    let mut shifted = m.clone();
    let bias: &mut ParamArray = shifted.param_mut("head.cls.2.bias").unwrap();
    bias.data.iter_mut().for_each(|b| *b += 10.0);
    let after = shifted.forward(&x).unwrap();
    let meta = LetterboxMeta::identity(64);
    let a = decode(&before, &meta, 0.0);
    let b = decode(&after, &meta, 0.0);
    assert_eq!(a.len(), b.len());
    for (d0, d1) in a.iter().zip(&b) {
        assert_eq!(d0.class_id, d1.class_id);
        assert!(d1.score >= d0.score);
    }
    assert!(b.iter().zip(&a).any(|(d1, d0)| d1.score > d0.score));
}

#[test]
fn hot_cell_localizes_within_one_stride() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (w, h) = (rng.gen_range(40..700), rng.gen_range(40..700));
        let img: Vec<u8> = vec![100; w * h * 3];
        let (_, meta) = letterbox(&img, w, h, 320).unwrap();
        let g = 10;
        let (gx, gy) = (rng.gen_range(0..g), rng.gen_range(0..g));
        let cls = rng.gen_range(0..3);
        let mut raw = Tensor::full(Shape::new(1, 7, g, g).unwrap(), -10.0);
        raw.data_mut()[..4 * g * g].iter_mut().for_each(|v| *v = 0.0);
        let idx = raw.shape().index(0, 4 + cls, gy, gx);
        raw.data_mut()[idx] = 4.0;
        let dets = decode(&raw, &meta, 0.5);
        let centre = ((gx as f32 + 0.5) * HEAD_STRIDE as f32, (gy as f32 + 0.5) * HEAD_STRIDE as f32);
        let (ex, ey) = meta.to_original(centre.0, centre.1);
        // cells entirely inside the padding decode to nothing
        if ex < 0.0 || ey < 0.0 || ex > w as f32 || ey > h as f32 {
            assert!(dets.len() <= 1);
            continue;
        }
        assert_eq!(dets.len(), 1);
        let d = dets[0];
        assert_eq!(d.class_id, cls);
        assert!((d.score - 0.98201376).abs() < 1e-6);
        let c = ((d.bbox.x1 + d.bbox.x2) / 2.0, (d.bbox.y1 + d.bbox.y2) / 2.0);
        let tol = HEAD_STRIDE as f32 / meta.scale;
        assert!((c.0 - ex).abs() <= tol && (c.1 - ey).abs() <= tol, "{c:?} vs ({ex}, {ey})");
    }
}

proptest! {
    #[test]
    fn decoded_boxes_stay_in_bounds(
        seed in any::<u64>(),
        w in 1usize..900,
        h in 1usize..900,
        scale in 0.1f32..8.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = vec![0u8; w * h * 3];
        let (_, meta) = letterbox(&img, w, h, 320).unwrap();
        let raw = Tensor::from_fn(Shape::new(1, 7, 10, 10).unwrap(), |_, _, _, _| rng.gen_range(-1.0f32..1.0) * scale);
        for d in decode(&raw, &meta, 0.0) {
            let b = d.bbox;
            prop_assert!(0.0 <= b.x1 && b.x1 < b.x2 && b.x2 <= w as f32);
            prop_assert!(0.0 <= b.y1 && b.y1 < b.y2 && b.y2 <= h as f32);
            prop_assert!((0.0..=1.0).contains(&d.score));
        }
    }

    #[test]
    fn letterbox_points_round_trip(w in 1usize..1200, h in 1usize..1200, fx in 0.0f32..1.0, fy in 0.0f32..1.0) {
        let img = vec![7u8; w * h * 3];
        let (t, meta) = letterbox(&img, w, h, 320).unwrap();
        prop_assert_eq!(t.shape(), Shape::new(1, 3, 320, 320).unwrap());
        let (x, y) = (fx * w as f32, fy * h as f32);
        let (ix, iy) = meta.to_input(x, y);
        let (bx, by) = meta.to_original(ix, iy);
        prop_assert!((bx - x).abs() <= 0.5 && (by - y).abs() <= 0.5);
    }
}

#[test]
fn letterbox_wide_example() {
    let img = vec![255u8; 200 * 100 * 3];
    let (t, meta) = letterbox(&img, 200, 100, 320).unwrap();
    assert!((meta.scale - 1.6).abs() < 1e-6);
    assert_eq!((meta.pad_x, meta.pad_y), (0.0, 80.0));
    assert_eq!(t.at(0, 0, 40, 160), 114.0 / 255.0);
    assert_eq!(t.at(0, 0, 160, 160), 1.0);
}

#[test]
fn peak_memory_is_deterministic_and_smaller_when_quantized() {
    let m = build_model(7, 0.25, 0.33, 128, 42).unwrap();
    let imgs: Vec<Tensor> = (0..2).map(|i| random_image(128, 20 + i)).collect();
    let q = quantize_model(&m, &calibrate(&m, &imgs).unwrap()).unwrap();
    let x = &imgs[0];
    let (_, f1) = track_memory(|| m.forward(x).unwrap());
    let (_, f2) = track_memory(|| m.forward(x).unwrap());
    assert_eq!(f1, f2);
    let (_, q1) = track_memory(|| q.forward(x).unwrap());
    let (_, q2) = track_memory(|| q.forward(x).unwrap());
    assert_eq!(q1, q2);
    assert!(q1.peak_live_tensor_bytes < f1.peak_live_tensor_bytes);
    assert!(q1.current_live_tensor_bytes <= q1.peak_live_tensor_bytes);
}

#[test]
fn memory_single_tensor_example() {
    let (_, s) = track_memory(|| Tensor::zeros(Shape::new(1, 3, 320, 320).unwrap()));
    assert_eq!(s.peak_live_tensor_bytes, 1_228_800);
    let mut seen = HashMap::new();
    for _ in 0..3 {
        let (_, s) = track_memory(|| {
            drop(Tensor::zeros(Shape::new(1, 1, 8, 8).unwrap()));
            Tensor::zeros(Shape::new(1, 1, 8, 8).unwrap())
        });
        *seen.entry((s.peak_live_tensor_bytes, s.allocation_count)).or_insert(0) += 1;
    }
    assert_eq!(seen.into_keys().collect::<Vec<_>>(), vec![(256, 2)]);
}
