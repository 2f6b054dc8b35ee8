//! Dataset manifests, class statistics, stratified splitting and a
//! synthetic-shapes generator.

mod io;
mod manifest;
mod split;
mod synth;

pub use io::{load_rgb, save_png, save_ppm};
pub use manifest::{
    class_distribution, load_manifest, parse_manifest, render_manifest, save_manifest, AnnotatedImage,
    BoxAnnotation, ClassDistribution, Dataset,
};
pub use split::{split, stratum_key};
pub use synth::{class_color, class_shape, synth_dataset, ShapeKind, SynthConfig, SynthDataset, BACKGROUND};
