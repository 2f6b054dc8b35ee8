//! A compact CBAM-augmented single-scale detector with int8 post-training
//! quantization, detection and classification metrics, a latency / memory /
//! energy profiler and synthetic dataset tooling.

pub mod cbam;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod pipeline;
pub mod profile;
pub mod quant;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{BBox, Detection, LetterboxMeta, ModelGraph, ModelMeta};
pub use pipeline::Model;
pub use profile::{EmissionRecord, LatencyStats, MemoryStats, Stage};
pub use quant::{CalibrationStats, QuantParams, QuantizedModel, QuantizedTensor};
pub use tensor::{Shape, Tensor};
