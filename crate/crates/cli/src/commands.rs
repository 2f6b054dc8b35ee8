use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use greenlite_core::container;
use greenlite_core::data::{class_distribution, load_manifest, load_rgb, save_manifest, save_ppm, synth_dataset, Dataset, SynthConfig};
use greenlite_core::eval::{evaluate_detections, GroundTruthBox};
use greenlite_core::graph::{build_model, decode, nms, Detection, LetterboxMeta, HEAD_STRIDE};
use greenlite_core::pipeline::{to_model_input, Model};
use greenlite_core::profile::{
    parse_emissions_csv, render_emissions_csv, stage_report, time_stage, track_memory, EmissionRecord, EnergyConfig,
    Stage,
};
use greenlite_core::quant::{calibrate, calibrate_percentile, quantize_model, reduction_percent};
use greenlite_core::Tensor;
use serde::Serialize;

use crate::args::{BenchArgs, BuildArgs, DetectArgs, Emit, QuantizeArgs, SynthArgs};
use crate::report::{
    bytes_to_mb, render_bench_csv, render_markdown, BenchRow, EMISSIONS_BY_MODEL_HEADER, MEMORY_HEADER,
};
use crate::settings::{detect_defaults, Settings};
use crate::{UsageError, EXIT_OK, EXIT_PARTIAL};

/// Conf threshold bench uses unless told otherwise.
const BENCH_CONF: f32 = 0.001;
pub const MANIFEST_NAME: &str = "manifest.tsv";

fn usage(msg: String) -> anyhow::Error {
    UsageError(msg).into()
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".emissions.csv");
    PathBuf::from(s)
}

fn image_path(manifest: &Path, rel: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new(".")).join(rel)
}

pub fn synth(a: &SynthArgs, out: &mut dyn Write) -> Result<u8> {
    if a.images == 0 || a.classes == 0 || a.max_boxes == 0 || a.size < 8 {
        return Err(usage("--images, --classes and --max-boxes must be >= 1 and --size >= 8".into()));
    }
    let cfg = SynthConfig {
        num_images: a.images,
        num_classes: a.classes,
        max_boxes_per_image: a.max_boxes,
        image_size: a.size,
        seed: a.seed,
    };
    let synth = synth_dataset(&cfg)?;
    std::fs::create_dir_all(a.out.join("images")).with_context(|| format!("creating {}", a.out.display()))?;
    for (rec, img) in synth.dataset.images.iter().zip(&synth.images) {
        save_ppm(img, &a.out.join(&rec.image_path))?;
    }
    save_manifest(&synth.dataset, &a.out.join(MANIFEST_NAME))?;
    let dist = class_distribution(&synth.dataset);
    writeln!(out, "wrote {} images with {} boxes to {}", synth.dataset.images.len(), dist.total_boxes(), a.out.display())?;
    write!(out, "{}", dist.render())?;
    Ok(EXIT_OK)
}

pub fn build(a: &BuildArgs, out: &mut dyn Write) -> Result<u8> {
    if a.classes == 0 {
        return Err(usage("--classes must be >= 1".into()));
    }
    if a.input_size == 0 || a.input_size % HEAD_STRIDE != 0 {
        return Err(usage(format!("--input-size must be a positive multiple of {HEAD_STRIDE}, got {}", a.input_size)));
    }
    if !(a.width_multiple > 0.0 && a.depth_multiple > 0.0) {
        return Err(usage("--width-multiple and --depth-multiple must be positive".into()));
    }
    let model = build_model(a.classes, a.width_multiple, a.depth_multiple, a.input_size, a.seed)?;
    let bytes = container::save_float(&model)?;
    write(&a.out, &bytes)?;
    writeln!(out, "model: {}", model.meta.name)?;
    writeln!(out, "parameters: {}", model.parameter_count())?;
    writeln!(out, "head channels: {} (4 + {})", model.head_channels(), a.classes)?;
    writeln!(out, "size: {:.2} MB ({} bytes)", bytes_to_mb(bytes.len() as u64), bytes.len())?;
    Ok(EXIT_OK)
}

fn load_inputs(manifest: &Path, ds: &Dataset, size: usize, limit: usize) -> Result<Vec<(Tensor, LetterboxMeta)>> {
    ds.images
        .iter()
        .take(limit)
        .map(|rec| {
            let img = load_rgb(&image_path(manifest, &rec.image_path))?;
            Ok(to_model_input(&img, size)?)
        })
        .collect()
}

pub fn quantize(a: &QuantizeArgs, out: &mut dyn Write) -> Result<u8> {
    if a.calib_count == 0 {
        return Err(usage("--calib-count must be >= 1".into()));
    }
    if let Some(p) = a.percentile {
        if !(p > 0.0 && p <= 100.0) {
            return Err(usage(format!("--percentile must lie in (0, 100], got {p}")));
        }
    }
    let settings = Settings::load(a.config.as_deref(), detect_defaults())?;
    let float_bytes = read(&a.model)?;
    let model = container::load_float(&float_bytes).with_context(|| format!("loading {}", a.model.display()))?;
    let ds = load_manifest(&a.calib_manifest)?;
    let inputs = load_inputs(&a.calib_manifest, &ds, model.meta.input_size, a.calib_count)?;
    let images: Vec<Tensor> = inputs.into_iter().map(|(t, _)| t).collect();

    let t = Instant::now();
    let stats = match a.percentile {
        Some(p) => calibrate_percentile(&model, &images, p)?,
        None => calibrate(&model, &images)?,
    };
    let calib_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let q = quantize_model(&model, &stats)?;
    let qbytes = q.to_container()?;
    let quant_s = t.elapsed().as_secs_f64();
    write(&a.out, &qbytes)?;

    let records = [
        EmissionRecord::new(Stage::Calibrate, calib_s, &settings.energy)?,
        EmissionRecord::new(Stage::Quantize, quant_s, &settings.energy)?,
    ];
    write(&sidecar(&a.out), render_emissions_csv(&stage_report(&records)))?;

    let (f, qs) = (float_bytes.len() as u64, qbytes.len() as u64);
    writeln!(out, "calibration images: {}", images.len())?;
    writeln!(out, "size: {:.2} MB ({f} bytes)", bytes_to_mb(f))?;
    writeln!(out, "q-size: {:.2} MB ({qs} bytes)", bytes_to_mb(qs))?;
    writeln!(out, "reduction: {:.1}%", reduction_percent(f as f64, qs as f64))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct JsonDetection<'a> {
    class: &'a str,
    class_id: usize,
    score: f32,
    #[serde(rename = "box")]
    bbox: [f32; 4],
}

pub fn detect(a: &DetectArgs, out: &mut dyn Write) -> Result<u8> {
    let settings = Settings::load(a.config.as_deref(), detect_defaults())?.with_flags(a.conf, a.iou)?;
    let model = Model::from_container(&read(&a.model)?).with_context(|| format!("loading {}", a.model.display()))?;
    let img = load_rgb(&a.image)?;
    let dets = model.detect(&img, settings.conf, settings.iou)?;
    match a.emit {
        Emit::Text => {
            for d in &dets {
                writeln!(out, "{}", d.to_record())?;
            }
        }
        Emit::Json => {
            let names = &model.meta().class_names;
            let rows: Vec<JsonDetection> = dets
                .iter()
                .map(|d| JsonDetection {
                    class: names.get(d.class_id).map(String::as_str).unwrap_or(""),
                    class_id: d.class_id,
                    score: d.score,
                    bbox: [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2],
                })
                .collect();
            writeln!(out, "{}", serde_json::to_string(&rows)?)?;
        }
    }
    Ok(EXIT_OK)
}

struct Measured {
    row: BenchRow,
    records: Vec<EmissionRecord>,
    peak: u64,
    allocations: u64,
}

struct Loaded {
    model: Model,
    bytes: u64,
}

fn load_model(path: &Path) -> Result<Loaded> {
    let raw = read(path)?;
    let model = Model::from_container(&raw).with_context(|| format!("loading {}", path.display()))?;
    Ok(Loaded { model, bytes: raw.len() as u64 })
}

fn bench_one(
    path: &Path,
    inputs: &[(Tensor, LetterboxMeta)],
    gts: &[Vec<GroundTruthBox>],
    a: &BenchArgs,
    settings: &Settings,
    twin_sizes: &[(PathBuf, Option<(u64, Option<u64>)>)],
) -> Result<Measured> {
    let energy = &settings.energy;
    let t = Instant::now();
    let loaded = load_model(path)?;
    let mut records = vec![EmissionRecord::new(Stage::Load, t.elapsed().as_secs_f64(), energy)?];
    if let Ok(text) = std::fs::read_to_string(sidecar(path)) {
        for (stage, total) in parse_emissions_csv(&text)?.stages {
            records.push(EmissionRecord::new(stage, total.duration_s, energy)?);
        }
    }
    let model = &loaded.model;
    let k = model.meta().num_classes;
    if let Some(bad) = gts.iter().flatten().find(|g| g.class_id >= k) {
        bail!("manifest class {} exceeds the model's {k} classes", bad.class_id);
    }
    if inputs.iter().any(|(t, _)| t.shape().h != model.meta().input_size) {
        bail!("model input size {} does not match the prepared images", model.meta().input_size);
    }

    let (first, _) = &inputs[0];
    let (first_out, mem) = track_memory(|| model.forward(first));
    first_out?;

    // one sample is a pass over every image; the last pass feeds evaluation
    let mut raws: Vec<Tensor> = Vec::new();
    let pass = time_stage(
        || -> Result<()> {
            raws = inputs.iter().map(|(x, _)| model.forward(x)).collect::<Result<_, _>>()?;
            Ok(())
        },
        a.warmup,
        a.iters,
    )?;
    let per_image = pass.mean_s / inputs.len() as f64;
    records.push(EmissionRecord::new(Stage::Inference, pass.mean_s * pass.sample_count as f64, energy)?);

    let t = Instant::now();
    let dets: Vec<Vec<Detection>> = raws
        .iter()
        .zip(inputs)
        .map(|(raw, (_, meta))| nms(&decode(raw, meta, settings.conf), settings.iou))
        .collect();
    let report = evaluate_detections(&dets, gts, k)?;
    records.push(EmissionRecord::new(Stage::Evaluate, t.elapsed().as_secs_f64(), energy)?);

    let qsize = match &loaded.model {
        Model::Int8(_) => Some(loaded.bytes),
        Model::Float(_) => twin_sizes
            .iter()
            .filter(|(p, _)| p != path)
            .find_map(|(_, s)| s.filter(|(_, src)| *src == Some(loaded.bytes)).map(|(own, _)| own)),
    };
    let carbon: f64 = records.iter().map(|r| r.carbon_kg).sum();
    let row = BenchRow {
        model: model_label(path),
        acc: None,
        precision: Some(report.prf.precision),
        recall: Some(report.prf.recall),
        f1: Some(report.prf.f1),
        map50: Some(report.map.map),
        size_mb: Some(bytes_to_mb(loaded.bytes)),
        qsize_mb: qsize.map(bytes_to_mb),
        mean_latency_s: Some(per_image),
        peak_mem_bytes: Some(mem.peak_live_tensor_bytes as u64),
        total_carbon_kg: Some(carbon),
    };
    Ok(Measured {
        row,
        records,
        peak: mem.peak_live_tensor_bytes as u64,
        allocations: mem.allocation_count as u64,
    })
}

fn model_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn emissions_by_model(rows: &[(String, Vec<EmissionRecord>)]) -> String {
    let mut out = format!("{EMISSIONS_BY_MODEL_HEADER}\n");
    for (model, recs) in rows {
        for (stage, t) in stage_report(recs).stages {
            out.push_str(&format!("{model},{stage},{:.6},{:.6},{:.6}\n", t.duration_s, t.energy_kwh, t.carbon_kg));
        }
    }
    out
}

pub fn bench(a: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    if a.iters == 0 {
        return Err(usage("--iters must be >= 1".into()));
    }
    let settings = Settings::load(a.config.as_deref(), BENCH_CONF)?.with_flags(a.conf, a.iou)?;
    let energy: EnergyConfig = settings.energy;
    let ds = load_manifest(&a.manifest)?;

    // container sizes up front so float rows can report their int8 twin
    let twins: Vec<(PathBuf, Option<(u64, Option<u64>)>)> = a
        .models
        .iter()
        .map(|p| {
            let info = std::fs::read(p).ok().and_then(|b| {
                let h = container::read_header(&b).ok()?;
                Some((b.len() as u64, h.source_size_bytes))
            });
            (p.clone(), info)
        })
        .collect();

    let size = a
        .models
        .iter()
        .find_map(|p| std::fs::read(p).ok().and_then(|b| container::read_header(&b).ok()).map(|h| h.model.input_size))
        .unwrap_or(greenlite_core::graph::DEFAULT_INPUT_SIZE);
    let t = Instant::now();
    let inputs = load_inputs(&a.manifest, &ds, size, usize::MAX)?;
    let data_load = EmissionRecord::new(Stage::Load, t.elapsed().as_secs_f64(), &energy)?;
    let gts: Vec<Vec<GroundTruthBox>> = ds.images.iter().map(|i| i.ground_truth()).collect();

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let mut all_records = vec![data_load];
    let mut by_model = vec![("dataset".to_string(), vec![data_load])];
    let mut memory = format!("{MEMORY_HEADER}\n");
    for path in &a.models {
        match bench_one(path, &inputs, &gts, a, &settings, &twins) {
            Ok(m) => {
                memory.push_str(&format!("{},inference,{},{}\n", m.row.model, m.peak, m.allocations));
                all_records.extend(m.records.iter().copied());
                by_model.push((m.row.model.clone(), m.records));
                rows.push(m.row);
            }
            Err(e) => {
                writeln!(err, "error: {}: {e:#}", path.display())?;
                failed.push(model_label(path));
                rows.push(BenchRow { model: model_label(path), ..Default::default() });
            }
        }
    }

    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    write(&a.out_dir.join("bench.csv"), render_bench_csv(&rows))?;
    write(&a.out_dir.join("emissions.csv"), render_emissions_csv(&stage_report(&all_records)))?;
    write(&a.out_dir.join("emissions_by_model.csv"), emissions_by_model(&by_model))?;
    write(&a.out_dir.join("memory.csv"), memory)?;
    let md = render_markdown(&rows, &failed);
    write(&a.out_dir.join("bench.md"), &md)?;
    write!(out, "{md}")?;
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}
