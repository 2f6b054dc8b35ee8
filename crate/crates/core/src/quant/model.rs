use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::calibrate::{CalibrationStats, INPUT_SLOT};
use super::conv::{quantized_conv2d, QuantConv};
use super::params::{
    choose_params, choose_weight_params, clamp_i8, dequantize, dequantize_slice, quantize_slice, quantize_tensor,
    round_half_away, QuantParams, QuantScheme, QuantizedTensor,
};
use crate::cbam::{cbam_forward, CbamParams};
use crate::container::{self, ContainerKind, Header, NamedTensor, Payload};
use crate::error::{contract, Error, Result};
use crate::graph::{check_dag, execute, Layer, LayerKind, ModelGraph, ModelMeta};
use crate::tensor::{
    batchnorm_infer, concat_many, global_pool, pool, Activation, ConvGeometry, ConvSpec, PoolKind, Shape, Tensor,
};

/// A node of the int8 graph. Parameter tensors live in the model's tensor
/// store under `<name>.<slot>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLayer {
    pub name: String,
    pub kind: QKind,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum QKind {
    /// Graph input, quantized with `out`. Inside a head body it passes the
    /// already-quantized head input through.
    Input { out: QuantParams },
    /// Tensors: `<name>.weight` (i8), `<name>.bias` (i32). Batch-norm has
    /// already been folded in where it followed the conv.
    Conv {
        geometry: ConvGeometry,
        weight_params: QuantParams,
        #[serde(with = "crate::container::f32_as_f64")]
        input_scale: f32,
        out: QuantParams,
    },
    /// Elementwise activation through a 256-entry lookup table.
    Act { kind: Activation, input: QuantParams, out: QuantParams },
    /// Max pooling directly on int8 codes; output keeps the input encoding.
    MaxPool { kernel: usize, stride: usize, padding: usize },
    /// Output keeps the input encoding.
    Upsample,
    Concat { out: QuantParams },
    Add { out: QuantParams },
    /// Attention stays in float: inputs are dequantized, the block runs
    /// with dequantized weights and the result is requantized. Tensors:
    /// `<name>.mlp_w1`, `.mlp_w2`, `.spatial.weight` (i8) and the f32 biases.
    Cbam {
        channels: usize,
        reduction: usize,
        spatial_kernel: usize,
        w1_params: QuantParams,
        w2_params: QuantParams,
        spatial_params: QuantParams,
        out: QuantParams,
    },
    /// Any other float op (standalone batch-norm, average or global
    /// pooling) evaluated on dequantized inputs.
    Float { inner: LayerKind, out: QuantParams },
    DetectHead { num_classes: usize, stride: usize, body: Vec<QLayer>, box_out: usize, cls_out: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub meta: ModelMeta,
    layers: Vec<QLayer>,
    tensors: BTreeMap<String, NamedTensor>,
    /// Size of the float container this model was derived from, when known.
    pub source_size_bytes: Option<u64>,
}

/// Activation encoding for a calibrated slot. All-zero slots get a fixed
/// [0, 1] range; any scale encodes zero exactly there.
fn activation_params(stats: &CalibrationStats, slot: &str, missing: &mut Vec<String>) -> QuantParams {
    match stats.get(slot) {
        Some(s) => match choose_params(s.min, s.max, QuantScheme::PerTensorAffine) {
            Ok(p) => p,
            Err(_) => choose_params(0.0, 1.0, QuantScheme::PerTensorAffine).expect("valid range"),
        },
        None => {
            missing.push(slot.to_string());
            choose_params(0.0, 1.0, QuantScheme::PerTensorAffine).expect("valid range")
        }
    }
}

struct Quantizer<'a> {
    model: &'a ModelGraph,
    stats: &'a CalibrationStats,
    tensors: BTreeMap<String, NamedTensor>,
    missing: Vec<String>,
}

impl Quantizer<'_> {
    fn put(&mut self, name: String, shape: Vec<usize>, payload: Payload) {
        self.tensors.insert(name.clone(), NamedTensor { name, shape, payload });
    }

    fn act(&mut self, slot: &str) -> QuantParams {
        activation_params(self.stats, slot, &mut self.missing)
    }

    /// Converts one layer list. `input_params` encodes layer 0.
    fn convert(&mut self, layers: &[Layer], input_params: QuantParams) -> Result<(Vec<QLayer>, Vec<usize>)> {
        check_dag(layers, "quantize")?;
        let mut consumers = vec![0usize; layers.len()];
        for l in layers {
            for &j in &l.inputs {
                consumers[j] += 1;
            }
        }
        // conv index -> batch-norm index it folds into
        let mut fold: BTreeMap<usize, usize> = BTreeMap::new();
        for (j, l) in layers.iter().enumerate() {
            if let LayerKind::Bn { .. } = l.kind {
                let i = l.inputs[0];
                if matches!(layers[i].kind, LayerKind::Conv { .. }) && consumers[i] == 1 {
                    fold.insert(i, j);
                }
            }
        }
        let folded_bn: Vec<usize> = fold.values().copied().collect();

        let mut remap = vec![usize::MAX; layers.len()];
        let mut out: Vec<QLayer> = Vec::new();
        let mut enc: Vec<Option<QuantParams>> = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            if folded_bn.contains(&i) {
                remap[i] = remap[layer.inputs[0]];
                continue;
            }
            let inputs: Vec<usize> = layer.inputs.iter().map(|&j| remap[j]).collect();
            let in_params: Vec<QuantParams> = inputs.iter().map(|&j| enc[j].clone().expect("encoded")).collect();
            let name = layer.name.clone();
            let (kind, params) = match &layer.kind {
                LayerKind::Input => (QKind::Input { out: input_params.clone() }, Some(input_params.clone())),
                LayerKind::Conv { geometry } => {
                    let mut spec = self.model.conv_spec(&name, geometry)?;
                    let out_slot = match fold.get(&i) {
                        Some(&bn) => {
                            self.fold_bn(&mut spec, &layers[bn])?;
                            layers[bn].name.clone()
                        }
                        None => name.clone(),
                    };
                    let out_p = self.act(&out_slot);
                    let qc = QuantConv::from_float(&spec, in_params[0].scale[0])?;
                    let w = &geometry;
                    let wshape = vec![w.out_channels, w.in_channels / w.groups, w.kernel_size, w.kernel_size];
                    self.put(format!("{name}.weight"), wshape, Payload::I8(qc.weights.clone()));
                    self.put(format!("{name}.bias"), vec![w.out_channels], Payload::I32(qc.bias.clone()));
                    let kind = QKind::Conv {
                        geometry: *geometry,
                        weight_params: qc.weight_params,
                        input_scale: qc.input_scale,
                        out: out_p.clone(),
                    };
                    (kind, Some(out_p))
                }
                LayerKind::Act { kind } => {
                    let out_p = self.act(&name);
                    (QKind::Act { kind: *kind, input: in_params[0].clone(), out: out_p.clone() }, Some(out_p))
                }
                LayerKind::Pool { kind: PoolKind::Max, kernel, stride, padding } => (
                    QKind::MaxPool { kernel: *kernel, stride: *stride, padding: *padding },
                    Some(in_params[0].clone()),
                ),
                LayerKind::Upsample => (QKind::Upsample, Some(in_params[0].clone())),
                LayerKind::Concat => {
                    let out_p = self.act(&name);
                    (QKind::Concat { out: out_p.clone() }, Some(out_p))
                }
                LayerKind::Add => {
                    let out_p = self.act(&name);
                    (QKind::Add { out: out_p.clone() }, Some(out_p))
                }
                LayerKind::Cbam { channels, reduction, spatial_kernel } => {
                    let out_p = self.act(&name);
                    let kind = self.cbam(&name, *channels, *reduction, *spatial_kernel, out_p.clone())?;
                    (kind, Some(out_p))
                }
                LayerKind::Bn { .. } => {
                    for s in ["gamma", "beta", "mean", "var"] {
                        let p = self.model.param(&format!("{name}.{s}"))?.clone();
                        self.put(format!("{name}.{s}"), p.shape, Payload::F32(p.data));
                    }
                    let out_p = self.act(&name);
                    (QKind::Float { inner: layer.kind.clone(), out: out_p.clone() }, Some(out_p))
                }
                LayerKind::Pool { .. } | LayerKind::GlobalPool { .. } => {
                    let out_p = self.act(&name);
                    (QKind::Float { inner: layer.kind.clone(), out: out_p.clone() }, Some(out_p))
                }
                LayerKind::DetectHead { num_classes, stride, body, box_out, cls_out } => {
                    let (qbody, body_map) = self.convert(body, in_params[0].clone())?;
                    let kind = QKind::DetectHead {
                        num_classes: *num_classes,
                        stride: *stride,
                        body: qbody,
                        box_out: body_map[*box_out],
                        cls_out: body_map[*cls_out],
                    };
                    (kind, None)
                }
            };
            remap[i] = out.len();
            out.push(QLayer { name, kind, inputs });
            enc.push(params);
        }
        Ok((out, remap))
    }

    fn fold_bn(&self, spec: &mut ConvSpec, bn: &Layer) -> Result<()> {
        let LayerKind::Bn { eps } = bn.kind else { unreachable!() };
        let p = |s: &str| self.model.param(&format!("{}.{s}", bn.name)).map(|a| a.data.clone());
        let (gamma, beta, mean, var) = (p("gamma")?, p("beta")?, p("mean")?, p("var")?);
        let per = spec.weights.len() / spec.out_channels;
        for c in 0..spec.out_channels {
            let f = gamma[c] as f64 / (var[c] as f64 + eps as f64).sqrt();
            for w in &mut spec.weights[c * per..(c + 1) * per] {
                *w = (*w as f64 * f) as f32;
            }
            spec.bias[c] = ((spec.bias[c] as f64 - mean[c] as f64) * f + beta[c] as f64) as f32;
        }
        Ok(())
    }

    fn cbam(&mut self, name: &str, channels: usize, reduction: usize, k: usize, out: QuantParams) -> Result<QKind> {
        let mut q = |slot: &str, rows: usize| -> Result<QuantParams> {
            let p = self.model.param(&format!("{name}.{slot}"))?.clone();
            let params = choose_weight_params(&p.data, rows)?;
            let data = quantize_slice(&p.data, &params)?;
            self.put(format!("{name}.{slot}"), p.shape, Payload::I8(data));
            Ok(params)
        };
        let hidden = channels / reduction;
        let w1_params = q("mlp_w1", hidden)?;
        let w2_params = q("mlp_w2", channels)?;
        let spatial_params = q("spatial.weight", 1)?;
        for slot in ["mlp_b1", "mlp_b2", "spatial.bias"] {
            let p = self.model.param(&format!("{name}.{slot}"))?.clone();
            self.put(format!("{name}.{slot}"), p.shape, Payload::F32(p.data));
        }
        Ok(QKind::Cbam { channels, reduction, spatial_kernel: k, w1_params, w2_params, spatial_params, out })
    }
}

/// Post-training quantization of `model` with activation ranges from
/// `stats`: per-channel symmetric int8 conv weights with batch-norm folded
/// in, per-tensor affine int8 activations.
pub fn quantize_model(model: &ModelGraph, stats: &CalibrationStats) -> Result<QuantizedModel> {
    let mut q = Quantizer { model, stats, tensors: BTreeMap::new(), missing: Vec::new() };
    let input = activation_params(stats, INPUT_SLOT, &mut q.missing);
    let (layers, _) = q.convert(model.layers(), input)?;
    if !q.missing.is_empty() {
        let mut missing = q.missing;
        missing.sort();
        missing.dedup();
        return Err(Error::CalibrationCoverage(missing));
    }
    let source = container::save_float(model)?.len() as u64;
    QuantizedModel::new(model.meta.clone(), layers, q.tensors, Some(source))
}

/// 256-entry table mapping input codes to output codes through `kind`.
fn activation_lut(kind: Activation, input: &QuantParams, out: &QuantParams) -> [i8; 256] {
    let mut lut = [0i8; 256];
    for (i, slot) in lut.iter_mut().enumerate() {
        let q = (i as i32 - 128) as i8;
        *slot = out.quantize_value(kind.apply(input.dequantize_value(q, 0)), 0);
    }
    lut
}

fn requantize(q: i8, from: &QuantParams, to: &QuantParams) -> i8 {
    let x = from.scale[0] as f64 * (q as i32 - from.zero_point[0]) as f64;
    clamp_i8(round_half_away(x / to.scale[0] as f64) as i64 + to.zero_point[0] as i64)
}

fn maxpool_i8(x: &QuantizedTensor, kernel: usize, stride: usize, padding: usize) -> Result<QuantizedTensor> {
    if kernel == 0 || stride == 0 || 2 * padding > kernel {
        contract!("invalid max-pool configuration k={kernel} s={stride} p={padding}");
    }
    let s = x.shape();
    let oh = (s.h + 2 * padding).checked_sub(kernel).map(|v| v / stride + 1);
    let ow = (s.w + 2 * padding).checked_sub(kernel).map(|v| v / stride + 1);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        contract!("max-pool window larger than padded input");
    };
    let os = Shape::new(s.n, s.c, oh, ow)?;
    let pad = padding as isize;
    let src = x.data();
    let mut out = Vec::with_capacity(os.numel());
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = &src[s.index(n, c, 0, 0)..s.index(n, c, 0, 0) + s.plane()];
            for oy in 0..oh {
                let y0 = (oy * stride) as isize - pad;
                let (ya, yb) = (y0.max(0) as usize, ((y0 + kernel as isize).min(s.h as isize)) as usize);
                for ox in 0..ow {
                    let x0 = (ox * stride) as isize - pad;
                    let (xa, xb) = (x0.max(0) as usize, ((x0 + kernel as isize).min(s.w as isize)) as usize);
                    let mut m = i8::MIN;
                    for y in ya..yb {
                        for v in &plane[y * s.w + xa..y * s.w + xb] {
                            m = m.max(*v);
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    QuantizedTensor::new(os, out, x.params().clone())
}

impl QuantizedModel {
    pub fn new(
        meta: ModelMeta,
        layers: Vec<QLayer>,
        tensors: BTreeMap<String, NamedTensor>,
        source_size_bytes: Option<u64>,
    ) -> Result<Self> {
        let m = Self { meta, layers, tensors, source_size_bytes };
        m.validate(&m.layers)?;
        Ok(m)
    }

    pub fn layers(&self) -> &[QLayer] {
        &self.layers
    }

    pub fn tensors(&self) -> &BTreeMap<String, NamedTensor> {
        &self.tensors
    }

    fn validate(&self, layers: &[QLayer]) -> Result<()> {
        if !matches!(layers.first().map(|l| &l.kind), Some(QKind::Input { .. })) {
            contract!("quantized graph must start with an input");
        }
        for (i, l) in layers.iter().enumerate().skip(1) {
            if l.inputs.is_empty() || l.inputs.iter().any(|&j| j >= i) {
                contract!("quantized layer {} must consume earlier layers", l.name);
            }
            let need: &[(&str, crate::container::DType)] = match &l.kind {
                QKind::Conv { .. } => &[("weight", crate::container::DType::I8), ("bias", crate::container::DType::I32)],
                QKind::Cbam { .. } => &[
                    ("mlp_w1", crate::container::DType::I8),
                    ("mlp_w2", crate::container::DType::I8),
                    ("spatial.weight", crate::container::DType::I8),
                    ("mlp_b1", crate::container::DType::F32),
                    ("mlp_b2", crate::container::DType::F32),
                    ("spatial.bias", crate::container::DType::F32),
                ],
                _ => &[],
            };
            for (slot, dtype) in need {
                match self.tensors.get(&format!("{}.{slot}", l.name)) {
                    Some(t) if t.payload.dtype() == *dtype => {}
                    _ => contract!("quantized layer {} is missing tensor {slot}", l.name),
                }
            }
            if let QKind::DetectHead { body, box_out, cls_out, .. } = &l.kind {
                self.validate(body)?;
                if *box_out == 0 || *cls_out == 0 || *box_out >= body.len() || *cls_out >= body.len() {
                    contract!("detect head outputs out of range");
                }
            }
        }
        Ok(())
    }

    fn i8_tensor(&self, name: &str) -> Result<&[i8]> {
        match self.tensors.get(name).map(|t| &t.payload) {
            Some(Payload::I8(v)) => Ok(v),
            _ => contract!("missing int8 tensor {name}"),
        }
    }

    fn i32_tensor(&self, name: &str) -> Result<&[i32]> {
        match self.tensors.get(name).map(|t| &t.payload) {
            Some(Payload::I32(v)) => Ok(v),
            _ => contract!("missing int32 tensor {name}"),
        }
    }

    fn f32_tensor(&self, name: &str) -> Result<&[f32]> {
        match self.tensors.get(name).map(|t| &t.payload) {
            Some(Payload::F32(v)) => Ok(v),
            _ => contract!("missing f32 tensor {name}"),
        }
    }

    /// Float CBAM parameters rebuilt from the stored int8 weights.
    pub fn cbam_params(&self, layer: &QLayer) -> Result<CbamParams> {
        let QKind::Cbam { channels, reduction, spatial_kernel: k, w1_params, w2_params, spatial_params, .. } =
            &layer.kind
        else {
            contract!("{} is not a CBAM layer", layer.name);
        };
        let n = &layer.name;
        let w1 = dequantize_slice(self.i8_tensor(&format!("{n}.mlp_w1"))?, w1_params);
        let w2 = dequantize_slice(self.i8_tensor(&format!("{n}.mlp_w2"))?, w2_params);
        let sw = dequantize_slice(self.i8_tensor(&format!("{n}.spatial.weight"))?, spatial_params);
        let spatial = ConvSpec::new(2, 1, *k, 1, (k - 1) / 2, 1, sw, self.f32_tensor(&format!("{n}.spatial.bias"))?.to_vec())?;
        CbamParams::new(
            *channels,
            *reduction,
            w1,
            self.f32_tensor(&format!("{n}.mlp_b1"))?.to_vec(),
            w2,
            self.f32_tensor(&format!("{n}.mlp_b2"))?.to_vec(),
            spatial,
        )
    }

    fn quant_conv(&self, layer: &QLayer) -> Result<QuantConv> {
        let QKind::Conv { geometry, weight_params, input_scale, .. } = &layer.kind else {
            contract!("{} is not a conv layer", layer.name);
        };
        QuantConv::new(
            *geometry,
            self.i8_tensor(&format!("{}.weight", layer.name))?.to_vec(),
            weight_params.clone(),
            self.i32_tensor(&format!("{}.bias", layer.name))?.to_vec(),
            *input_scale,
        )
    }

    /// Raw head tensor (1, 4 + K, S/32, S/32), dequantized from the int8
    /// branch outputs.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let s = self.meta.input_size;
        let expect = Shape::new(1, 3, s, s)?;
        if input.shape() != expect {
            contract!("model input must be {expect}, got {}", input.shape());
        }
        let QKind::Input { out } = &self.layers[0].kind else { unreachable!("validated") };
        let q = quantize_tensor(input, out)?;
        let deps: Vec<&[usize]> = self.layers.iter().map(|l| l.inputs.as_slice()).collect();
        let last = self.layers.len() - 1;
        let QKind::DetectHead { body, box_out, cls_out, .. } = &self.layers[last].kind else {
            contract!("quantized graph must end with the detect head");
        };
        let mut feats = execute(&deps[..last], &q, &[self.layers[last].inputs[0]], |i, args| {
            self.eval(&self.layers[i], args)
        })?;
        let feat = feats.pop().expect("head input");
        let body_deps: Vec<&[usize]> = body.iter().map(|l| l.inputs.as_slice()).collect();
        let mut outs = execute(&body_deps, &feat, &[*box_out, *cls_out], |i, args| self.eval(&body[i], args))?;
        drop(feat);
        let cls = dequantize(&outs.pop().expect("cls"));
        let bx = dequantize(&outs.pop().expect("box"));
        concat_many(&[&bx, &cls])
    }

    fn eval(&self, layer: &QLayer, args: &[&QuantizedTensor]) -> Result<QuantizedTensor> {
        let x = args[0];
        match &layer.kind {
            QKind::Input { .. } => Ok(x.clone()),
            QKind::Conv { out, .. } => quantized_conv2d(x, &self.quant_conv(layer)?, out),
            QKind::Act { kind, input, out } => {
                if x.params() != input {
                    contract!("activation {} received an unexpected encoding", layer.name);
                }
                let lut = activation_lut(*kind, input, out);
                let data = x.data().iter().map(|&q| lut[(q as i32 + 128) as usize]).collect();
                QuantizedTensor::new(x.shape(), data, out.clone())
            }
            QKind::MaxPool { kernel, stride, padding } => maxpool_i8(x, *kernel, *stride, *padding),
            QKind::Upsample => {
                let s = x.shape();
                let os = Shape::new(s.n, s.c, s.h * 2, s.w * 2)?;
                let mut data = Vec::with_capacity(os.numel());
                for n in 0..s.n {
                    for c in 0..s.c {
                        for y in 0..os.h {
                            for xx in 0..os.w {
                                data.push(x.data()[s.index(n, c, y / 2, xx / 2)]);
                            }
                        }
                    }
                }
                QuantizedTensor::new(os, data, x.params().clone())
            }
            QKind::Concat { out } => {
                let f = x.shape();
                let mut channels = 0;
                for a in args {
                    let s = a.shape();
                    if (s.n, s.h, s.w) != (f.n, f.h, f.w) {
                        contract!("concat shape mismatch in {}", layer.name);
                    }
                    channels += s.c;
                }
                let os = Shape::new(f.n, channels, f.h, f.w)?;
                let mut data = Vec::with_capacity(os.numel());
                for n in 0..f.n {
                    for a in args {
                        let s = a.shape();
                        let start = s.index(n, 0, 0, 0);
                        let src = &a.data()[start..start + s.c * s.plane()];
                        if a.params() == out {
                            data.extend_from_slice(src);
                        } else {
                            data.extend(src.iter().map(|&q| requantize(q, a.params(), out)));
                        }
                    }
                }
                QuantizedTensor::new(os, data, out.clone())
            }
            QKind::Add { out } => {
                let (a, b) = (args[0], args[1]);
                if a.shape() != b.shape() {
                    contract!("add shape mismatch in {}", layer.name);
                }
                let (pa, pb) = (a.params(), b.params());
                let data = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&qa, &qb)| {
                        let v = pa.scale[0] as f64 * (qa as i32 - pa.zero_point[0]) as f64
                            + pb.scale[0] as f64 * (qb as i32 - pb.zero_point[0]) as f64;
                        clamp_i8(round_half_away(v / out.scale[0] as f64) as i64 + out.zero_point[0] as i64)
                    })
                    .collect();
                QuantizedTensor::new(a.shape(), data, out.clone())
            }
            QKind::Cbam { out, .. } => {
                let y = cbam_forward(&dequantize(x), &self.cbam_params(layer)?)?;
                quantize_tensor(&y, out)
            }
            QKind::Float { inner, out } => {
                let xf = dequantize(x);
                let y = match inner {
                    LayerKind::Bn { eps } => {
                        let p = |s: &str| self.f32_tensor(&format!("{}.{s}", layer.name));
                        batchnorm_infer(&xf, p("gamma")?, p("beta")?, p("mean")?, p("var")?, *eps)?
                    }
                    LayerKind::Pool { kind, kernel, stride, padding } => pool(&xf, *kind, *kernel, *stride, *padding)?,
                    LayerKind::GlobalPool { kind } => global_pool(&xf, *kind),
                    other => contract!("no float fallback for {}", other.tag()),
                };
                quantize_tensor(&y, out)
            }
            QKind::DetectHead { .. } => contract!("nested detect head"),
        }
    }

    pub fn to_container(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: ContainerKind::Int8,
            model: self.meta.clone(),
            layers: serde_json::to_value(&self.layers)?,
            source_size_bytes: self.source_size_bytes,
            tensors: Vec::new(),
        };
        let tensors: Vec<NamedTensor> = self.tensors.values().cloned().collect();
        container::write(header, &tensors)
    }

    pub fn from_container(bytes: &[u8]) -> Result<Self> {
        let (header, tensors) = container::read(bytes)?;
        if header.kind != ContainerKind::Int8 {
            return Err(Error::Container("expected an int8 container".into()));
        }
        let layers: Vec<QLayer> = serde_json::from_value(header.layers)?;
        Self::new(header.model, layers, tensors, header.source_size_bytes)
    }
}
