use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::exec::execute;
use crate::cbam::{cbam_forward, CbamParams, DEFAULT_REDUCTION, DEFAULT_SPATIAL_KERNEL};
use crate::error::{contract, Error, Result};
use crate::tensor::{
    activation, add, batchnorm_infer, concat_many, conv2d_raw, global_pool, pool, upsample_nearest2x, Activation,
    ConvGeometry, ConvSpec, PoolKind, Shape, Tensor,
};

pub const DEFAULT_CLASS_NAMES: [&str; 7] = ["biological", "cardboard", "glass", "metal", "paper", "plastic", "trash"];
pub const DEFAULT_INPUT_SIZE: usize = 320;
pub const DEFAULT_WIDTH_MULTIPLE: f32 = 0.25;
pub const DEFAULT_DEPTH_MULTIPLE: f32 = 0.33;
pub const HEAD_STRIDE: usize = 32;
pub const BN_EPS: f32 = 1e-3;
const INIT_BOUND: f32 = 0.1;

/// A named parameter array stored in the model's weight store.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ParamArray {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LayerKind {
    /// The graph (or head body) input. Always layer 0.
    Input,
    /// Parameters: `<name>.weight`, `<name>.bias`.
    Conv { geometry: ConvGeometry },
    /// Parameters: `<name>.gamma`, `<name>.beta`, `<name>.mean`, `<name>.var`.
    Bn {
        #[serde(with = "crate::container::f32_as_f64")]
        eps: f32,
    },
    Act { kind: Activation },
    Pool { kind: PoolKind, kernel: usize, stride: usize, padding: usize },
    GlobalPool { kind: PoolKind },
    Concat,
    Add,
    Upsample,
    /// Parameters: `<name>.mlp_w1`, `.mlp_b1`, `.mlp_w2`, `.mlp_b2`, `.spatial.weight`, `.spatial.bias`.
    Cbam { channels: usize, reduction: usize, spatial_kernel: usize },
    /// Anchor-free head. `body` is a nested layer list whose layer 0 is the
    /// head input; the head output concatenates the box and class outputs.
    DetectHead { num_classes: usize, stride: usize, body: Vec<Layer>, box_out: usize, cls_out: usize },
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv { .. } => "conv",
            LayerKind::Bn { .. } => "bn",
            LayerKind::Act { .. } => "act",
            LayerKind::Pool { .. } => "pool",
            LayerKind::GlobalPool { .. } => "global_pool",
            LayerKind::Concat => "concat",
            LayerKind::Add => "add",
            LayerKind::Upsample => "upsample",
            LayerKind::Cbam { .. } => "cbam",
            LayerKind::DetectHead { .. } => "detect_head",
        }
    }
}

/// One node of the graph. `name` is both the activation slot name and the
/// prefix of the layer's parameter slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub name: String,
    pub input_size: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

/// Float detector: an ordered DAG of layers plus a named weight store.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub meta: ModelMeta,
    layers: Vec<Layer>,
    weights: BTreeMap<String, ParamArray>,
}

pub(crate) fn check_dag(layers: &[Layer], context: &str) -> Result<()> {
    if !matches!(layers.first().map(|l| &l.kind), Some(LayerKind::Input)) {
        contract!("{context}: layer 0 must be the input");
    }
    for (i, layer) in layers.iter().enumerate().skip(1) {
        if layer.inputs.is_empty() || layer.inputs.iter().any(|&j| j >= i) {
            contract!("{context}: layer {i} ({}) must consume strictly earlier layers", layer.name);
        }
        if matches!(layer.kind, LayerKind::Input) {
            contract!("{context}: only layer 0 may be an input");
        }
    }
    Ok(())
}

impl ModelGraph {
    pub fn new(meta: ModelMeta, layers: Vec<Layer>, weights: BTreeMap<String, ParamArray>) -> Result<Self> {
        let g = Self { meta, layers, weights };
        g.validate()?;
        Ok(g)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn weights(&self) -> &BTreeMap<String, ParamArray> {
        &self.weights
    }

    pub fn param(&self, name: &str) -> Result<&ParamArray> {
        self.weights.get(name).ok_or_else(|| Error::Contract(format!("missing parameter slot {name}")))
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamArray> {
        self.weights.get_mut(name)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.values().map(ParamArray::numel).sum()
    }

    pub fn grid_size(&self) -> usize {
        self.meta.input_size / HEAD_STRIDE
    }

    pub fn head_channels(&self) -> usize {
        4 + self.meta.num_classes
    }

    /// Every parameter slot a layer references, with its expected shape.
    pub fn expected_params(layer: &Layer) -> Vec<(String, Vec<usize>)> {
        let n = &layer.name;
        match &layer.kind {
            LayerKind::Conv { geometry: g } => vec![
                (
                    format!("{n}.weight"),
                    vec![g.out_channels, g.in_channels / g.groups, g.kernel_size, g.kernel_size],
                ),
                (format!("{n}.bias"), vec![g.out_channels]),
            ],
            LayerKind::Bn { .. } => Vec::new(),
            LayerKind::Cbam { channels, reduction, spatial_kernel } => {
                let h = channels / reduction;
                vec![
                    (format!("{n}.mlp_w1"), vec![h, *channels]),
                    (format!("{n}.mlp_b1"), vec![h]),
                    (format!("{n}.mlp_w2"), vec![*channels, h]),
                    (format!("{n}.mlp_b2"), vec![*channels]),
                    (format!("{n}.spatial.weight"), vec![1, 2, *spatial_kernel, *spatial_kernel]),
                    (format!("{n}.spatial.bias"), vec![1]),
                ]
            }
            LayerKind::DetectHead { body, .. } => body.iter().flat_map(Self::expected_params).collect(),
            _ => Vec::new(),
        }
    }

    fn bn_param_names(layer: &Layer) -> Vec<String> {
        match &layer.kind {
            LayerKind::Bn { .. } => ["gamma", "beta", "mean", "var"].iter().map(|s| format!("{}.{s}", layer.name)).collect(),
            LayerKind::DetectHead { body, .. } => body.iter().flat_map(Self::bn_param_names).collect(),
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dag(&self.layers, "graph")?;
        let heads: Vec<usize> = self
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l.kind, LayerKind::DetectHead { .. }))
            .map(|(i, _)| i)
            .collect();
        if heads.len() != 1 {
            contract!("graph must contain exactly one detect_head, found {}", heads.len());
        }
        let head = &self.layers[heads[0]];
        if head.inputs.len() != 1 || !matches!(self.layers[head.inputs[0]].kind, LayerKind::Cbam { .. }) {
            contract!("detect_head must consume the CBAM output");
        }
        if heads[0] != self.layers.len() - 1 {
            contract!("detect_head must be the final layer");
        }
        if let LayerKind::DetectHead { body, box_out, cls_out, .. } = &head.kind {
            check_dag(body, "detect_head body")?;
            if *box_out >= body.len() || *cls_out >= body.len() || *box_out == 0 || *cls_out == 0 || box_out == cls_out {
                contract!("detect_head outputs out of range");
            }
        }
        for layer in &self.layers {
            for (name, shape) in Self::expected_params(layer) {
                let p = self.param(&name)?;
                if p.shape != shape || p.data.len() != p.numel() {
                    contract!("parameter {name} has shape {:?}, expected {shape:?}", p.shape);
                }
            }
            for name in Self::bn_param_names(layer) {
                self.param(&name)?;
            }
        }
        if self.meta.class_names.len() != self.meta.num_classes {
            contract!("{} class names for {} classes", self.meta.class_names.len(), self.meta.num_classes);
        }
        Ok(())
    }

    pub fn conv_spec(&self, name: &str, geometry: &ConvGeometry) -> Result<ConvSpec> {
        ConvSpec::new(
            geometry.in_channels,
            geometry.out_channels,
            geometry.kernel_size,
            geometry.stride,
            geometry.padding,
            geometry.groups,
            self.param(&format!("{name}.weight"))?.data.clone(),
            self.param(&format!("{name}.bias"))?.data.clone(),
        )
    }

    pub fn cbam_params(&self, name: &str, channels: usize, reduction: usize, k: usize) -> Result<CbamParams> {
        let p = |s: &str| self.param(&format!("{name}.{s}")).map(|a| a.data.clone());
        let spatial = ConvSpec::new(2, 1, k, 1, (k - 1) / 2, 1, p("spatial.weight")?, p("spatial.bias")?)?;
        CbamParams::new(channels, reduction, p("mlp_w1")?, p("mlp_b1")?, p("mlp_w2")?, p("mlp_b2")?, spatial)
    }

    /// Raw head tensor of shape (1, 4 + K, S/32, S/32).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_observed(input, &mut |_, _| {})
    }

    /// Like [`forward`](Self::forward) but reports every layer output
    /// (including the head's internal layers) to `observe` by slot name.
    pub fn forward_observed(&self, input: &Tensor, observe: &mut dyn FnMut(&str, &Tensor)) -> Result<Tensor> {
        let s = self.meta.input_size;
        let expect = Shape::new(1, 3, s, s)?;
        if input.shape() != expect {
            contract!("model input must be {expect}, got {}", input.shape());
        }
        self.run_layers(&self.layers, input, observe)
    }

    fn run_layers(&self, layers: &[Layer], input: &Tensor, observe: &mut dyn FnMut(&str, &Tensor)) -> Result<Tensor> {
        let deps: Vec<&[usize]> = layers.iter().map(|l| l.inputs.as_slice()).collect();
        let mut out = execute(&deps, input, &[layers.len() - 1], |i, args| {
            let t = self.eval_layer(&layers[i], args, observe)?;
            observe(&layers[i].name, &t);
            Ok(t)
        })?;
        Ok(out.pop().expect("one output"))
    }

    fn eval_layer(&self, layer: &Layer, args: &[&Tensor], observe: &mut dyn FnMut(&str, &Tensor)) -> Result<Tensor> {
        let n = &layer.name;
        let x = args[0];
        match &layer.kind {
            LayerKind::Input => unreachable!("input handled by executor"),
            LayerKind::Conv { geometry } => conv2d_raw(
                x,
                geometry,
                &self.param(&format!("{n}.weight"))?.data,
                &self.param(&format!("{n}.bias"))?.data,
            ),
            LayerKind::Bn { eps } => {
                let p = |s: &str| self.param(&format!("{n}.{s}")).map(|a| a.data.as_slice());
                batchnorm_infer(x, p("gamma")?, p("beta")?, p("mean")?, p("var")?, *eps)
            }
            LayerKind::Act { kind } => Ok(activation(x, *kind)),
            LayerKind::Pool { kind, kernel, stride, padding } => pool(x, *kind, *kernel, *stride, *padding),
            LayerKind::GlobalPool { kind } => Ok(global_pool(x, *kind)),
            LayerKind::Concat => concat_many(args),
            LayerKind::Add => add(args[0], args[1]),
            LayerKind::Upsample => Ok(upsample_nearest2x(x)),
            LayerKind::Cbam { channels, reduction, spatial_kernel } => {
                cbam_forward(x, &self.cbam_params(n, *channels, *reduction, *spatial_kernel)?)
            }
            LayerKind::DetectHead { body, box_out, cls_out, .. } => {
                let (b, c) = self.run_head(body, *box_out, *cls_out, x, observe)?;
                concat_many(&[&b, &c])
            }
        }
    }

    fn run_head(
        &self,
        body: &[Layer],
        box_out: usize,
        cls_out: usize,
        input: &Tensor,
        observe: &mut dyn FnMut(&str, &Tensor),
    ) -> Result<(Tensor, Tensor)> {
        let deps: Vec<&[usize]> = body.iter().map(|l| l.inputs.as_slice()).collect();
        let mut out = execute(&deps, input, &[box_out, cls_out], |i, args| {
            let t = self.eval_layer(&body[i], args, observe)?;
            observe(&body[i].name, &t);
            Ok(t)
        })?;
        let cls = out.pop().expect("cls output");
        let bx = out.pop().expect("box output");
        Ok((bx, cls))
    }
}

/// Builds layers and randomly initialised parameters in one pass.
pub(crate) struct Builder {
    pub layers: Vec<Layer>,
    pub weights: BTreeMap<String, ParamArray>,
    rng: ChaCha8Rng,
}

impl Builder {
    fn new(seed: u64) -> Self {
        let layers = vec![Layer { name: "input".into(), kind: LayerKind::Input, inputs: Vec::new() }];
        Self { layers, weights: BTreeMap::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn push(&mut self, name: String, kind: LayerKind, inputs: Vec<usize>) -> usize {
        self.layers.push(Layer { name, kind, inputs });
        self.layers.len() - 1
    }

    fn uniform(&mut self, name: String, shape: Vec<usize>) {
        let len = shape.iter().product();
        let data = (0..len).map(|_| self.rng.gen_range(-INIT_BOUND..=INIT_BOUND)).collect();
        self.weights.insert(name, ParamArray::new(shape, data));
    }

    fn constant(&mut self, name: String, len: usize, value: f32) {
        self.weights.insert(name, ParamArray::new(vec![len], vec![value; len]));
    }

    fn conv(&mut self, name: &str, from: usize, cin: usize, cout: usize, k: usize, stride: usize) -> usize {
        let geometry =
            ConvGeometry { in_channels: cin, out_channels: cout, kernel_size: k, stride, padding: k / 2, groups: 1 };
        self.uniform(format!("{name}.weight"), vec![cout, cin, k, k]);
        self.uniform(format!("{name}.bias"), vec![cout]);
        self.push(name.to_string(), LayerKind::Conv { geometry }, vec![from])
    }

    /// conv -> batch-norm -> SiLU
    fn conv_block(&mut self, name: &str, from: usize, cin: usize, cout: usize, k: usize, stride: usize) -> usize {
        let c = self.conv(&format!("{name}.conv"), from, cin, cout, k, stride);
        let bn = format!("{name}.bn");
        self.constant(format!("{bn}.gamma"), cout, 1.0);
        self.constant(format!("{bn}.beta"), cout, 0.0);
        self.constant(format!("{bn}.mean"), cout, 0.0);
        self.constant(format!("{bn}.var"), cout, 1.0);
        let b = self.push(bn, LayerKind::Bn { eps: BN_EPS }, vec![c]);
        self.push(format!("{name}.act"), LayerKind::Act { kind: Activation::Silu }, vec![b])
    }

    /// Cross-stage partial block with `n` residual bottlenecks. The input
    /// projection is written as two half-width 1x1 convs, which is the same
    /// map as one full-width conv followed by a channel split.
    fn c2f(&mut self, name: &str, from: usize, cin: usize, cout: usize, n: usize) -> usize {
        let c = cout / 2;
        let a = self.conv_block(&format!("{name}.cv1a"), from, cin, c, 1, 1);
        let b = self.conv_block(&format!("{name}.cv1b"), from, cin, c, 1, 1);
        let mut parts = vec![a, b];
        let mut last = b;
        for i in 0..n {
            let m1 = self.conv_block(&format!("{name}.m{i}.cv1"), last, c, c, 3, 1);
            let m2 = self.conv_block(&format!("{name}.m{i}.cv2"), m1, c, c, 3, 1);
            last = self.push(format!("{name}.m{i}.add"), LayerKind::Add, vec![last, m2]);
            parts.push(last);
        }
        let cat = self.push(format!("{name}.cat"), LayerKind::Concat, parts);
        self.conv_block(&format!("{name}.cv2"), cat, (2 + n) * c, cout, 1, 1)
    }

    fn sppf(&mut self, name: &str, from: usize, cin: usize, cout: usize, k: usize) -> usize {
        let c = cin / 2;
        let x = self.conv_block(&format!("{name}.cv1"), from, cin, c, 1, 1);
        let mut parts = vec![x];
        for i in 0..3 {
            let kind = LayerKind::Pool { kind: PoolKind::Max, kernel: k, stride: 1, padding: k / 2 };
            let p = self.push(format!("{name}.pool{i}"), kind, vec![*parts.last().unwrap()]);
            parts.push(p);
        }
        let cat = self.push(format!("{name}.cat"), LayerKind::Concat, parts);
        self.conv_block(&format!("{name}.cv2"), cat, 4 * c, cout, 1, 1)
    }

    fn cbam(&mut self, name: &str, from: usize, channels: usize) -> usize {
        let reduction = (1..=DEFAULT_REDUCTION.min(channels)).rev().find(|r| channels % r == 0).unwrap_or(1);
        let k = DEFAULT_SPATIAL_KERNEL;
        let h = channels / reduction;
        self.uniform(format!("{name}.mlp_w1"), vec![h, channels]);
        self.uniform(format!("{name}.mlp_b1"), vec![h]);
        self.uniform(format!("{name}.mlp_w2"), vec![channels, h]);
        self.uniform(format!("{name}.mlp_b2"), vec![channels]);
        self.uniform(format!("{name}.spatial.weight"), vec![1, 2, k, k]);
        self.uniform(format!("{name}.spatial.bias"), vec![1]);
        self.push(name.to_string(), LayerKind::Cbam { channels, reduction, spatial_kernel: k }, vec![from])
    }

    fn head(&mut self, name: &str, from: usize, cin: usize, hidden: usize, num_classes: usize) -> usize {
        let mut body = Builder { layers: Vec::new(), weights: BTreeMap::new(), rng: self.rng.clone() };
        body.layers.push(Layer { name: format!("{name}.input"), kind: LayerKind::Input, inputs: Vec::new() });
        let branch = |b: &mut Builder, tag: &str, out: usize| {
            let x = b.conv_block(&format!("{name}.{tag}.0"), 0, cin, hidden, 3, 1);
            let x = b.conv_block(&format!("{name}.{tag}.1"), x, hidden, hidden, 3, 1);
            b.conv(&format!("{name}.{tag}.2"), x, hidden, out, 1, 1)
        };
        let box_out = branch(&mut body, "box", 4);
        let cls_out = branch(&mut body, "cls", num_classes);
        self.rng = body.rng;
        self.weights.append(&mut body.weights);
        let kind = LayerKind::DetectHead { num_classes, stride: HEAD_STRIDE, body: body.layers, box_out, cls_out };
        self.push(name.to_string(), kind, vec![from])
    }
}

/// Channel count after width scaling, rounded up to a multiple of 8.
pub fn scale_width(base: usize, width_multiple: f32) -> usize {
    let v = (base.min(1024) as f32 * width_multiple / 8.0).ceil() as usize * 8;
    v.max(8)
}

pub fn scale_depth(base: usize, depth_multiple: f32) -> usize {
    ((base as f32 * depth_multiple).round() as usize).max(1)
}

/// Builds the desk-scale CBAM detector with deterministic random weights:
/// stem conv, four [stride-2 conv, C2f] stages, SPPF, CBAM and a
/// single-scale (stride 32) anchor-free head.
pub fn build_model(
    num_classes: usize,
    width_multiple: f32,
    depth_multiple: f32,
    input_size: usize,
    seed: u64,
) -> Result<ModelGraph> {
    let names = if num_classes == DEFAULT_CLASS_NAMES.len() {
        DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_classes).map(|i| format!("class{i}")).collect()
    };
    build_model_named(names, width_multiple, depth_multiple, input_size, seed)
}

pub fn build_model_named(
    class_names: Vec<String>,
    width_multiple: f32,
    depth_multiple: f32,
    input_size: usize,
    seed: u64,
) -> Result<ModelGraph> {
    let num_classes = class_names.len();
    if num_classes == 0 {
        contract!("num_classes must be >= 1");
    }
    if input_size == 0 || input_size % HEAD_STRIDE != 0 {
        contract!("input size {input_size} must be a positive multiple of {HEAD_STRIDE}");
    }
    if !(width_multiple > 0.0 && depth_multiple > 0.0) {
        contract!("width and depth multiples must be positive");
    }
    let ch: Vec<usize> = [64, 128, 256, 512, 1024].iter().map(|&c| scale_width(c, width_multiple)).collect();
    let depth: Vec<usize> = [3, 6, 6, 3].iter().map(|&d| scale_depth(d, depth_multiple)).collect();

    let mut b = Builder::new(seed);
    let mut x = b.conv_block("backbone.stem", 0, 3, ch[0], 3, 2);
    for stage in 0..4 {
        x = b.conv_block(&format!("backbone.s{}.down", stage + 1), x, ch[stage], ch[stage + 1], 3, 2);
        x = b.c2f(&format!("backbone.s{}.c2f", stage + 1), x, ch[stage + 1], ch[stage + 1], depth[stage]);
    }
    x = b.sppf("backbone.sppf", x, ch[4], ch[4], 5);
    x = b.cbam("cbam", x, ch[4]);
    let hidden = scale_width(256, width_multiple).max(16);
    b.head("head", x, ch[4], hidden, num_classes);

    let meta = ModelMeta { name: "yolov8n-cbam".into(), input_size, num_classes, class_names };
    ModelGraph::new(meta, b.layers, b.weights)
}
