use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "greenlite", version, about = "Build, quantize, run and benchmark a compact CBAM detector")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic shapes dataset and its manifest.
    Synth(SynthArgs),
    /// Build a randomly initialised float model container.
    Build(BuildArgs),
    /// Calibrate and quantize a float model to int8.
    Quantize(QuantizeArgs),
    /// Run detection on one image.
    Detect(DetectArgs),
    /// Evaluate and profile models on a dataset.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub images: usize,
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Image width in pixels; heights vary between half and all of it.
    #[arg(long, default_value_t = 320)]
    pub size: usize,
    #[arg(long, default_value_t = 4)]
    pub max_boxes: usize,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
    #[arg(long, default_value_t = greenlite_core::graph::DEFAULT_INPUT_SIZE)]
    pub input_size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = greenlite_core::graph::DEFAULT_WIDTH_MULTIPLE)]
    pub width_multiple: f32,
    #[arg(long, default_value_t = greenlite_core::graph::DEFAULT_DEPTH_MULTIPLE)]
    pub depth_multiple: f32,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub calib_manifest: PathBuf,
    /// Number of manifest images used for calibration (from the start).
    #[arg(long, default_value_t = 32)]
    pub calib_count: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Clip activation ranges at this percentile instead of min/max.
    #[arg(long)]
    pub percentile: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub conf: Option<f32>,
    #[arg(long)]
    pub iou: Option<f32>,
    #[arg(long, value_enum, default_value_t = Emit::Text)]
    pub emit: Emit,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model containers, comma separated or repeated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1)]
    pub iters: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Score threshold applied before matching; low values trace the full
    /// precision-recall curve.
    #[arg(long)]
    pub conf: Option<f32>,
    #[arg(long)]
    pub iou: Option<f32>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
