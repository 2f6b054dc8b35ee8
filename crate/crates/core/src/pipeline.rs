//! Image-to-detections plumbing shared by float and int8 models.

use image::RgbImage;

use crate::container::{self, ContainerKind};
use crate::error::Result;
use crate::graph::{decode, letterbox, nms, Detection, LetterboxMeta, ModelGraph, ModelMeta};
use crate::quant::QuantizedModel;
use crate::tensor::Tensor;

/// A loaded detector of either precision.
#[derive(Debug, Clone)]
pub enum Model {
    Float(ModelGraph),
    Int8(QuantizedModel),
}

impl Model {
    /// Loads a container of either kind.
    pub fn from_container(bytes: &[u8]) -> Result<Self> {
        match container::peek_kind(bytes)? {
            ContainerKind::Float => Ok(Model::Float(container::load_float(bytes)?)),
            ContainerKind::Int8 => Ok(Model::Int8(QuantizedModel::from_container(bytes)?)),
        }
    }

    pub fn to_container(&self) -> Result<Vec<u8>> {
        match self {
            Model::Float(m) => container::save_float(m),
            Model::Int8(m) => m.to_container(),
        }
    }

    pub fn meta(&self) -> &ModelMeta {
        match self {
            Model::Float(m) => &m.meta,
            Model::Int8(m) => &m.meta,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, Model::Int8(_))
    }

    /// Raw head tensor for a letterboxed input.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Model::Float(m) => m.forward(input),
            Model::Int8(m) => m.forward(input),
        }
    }

    pub fn detect_tensor(&self, input: &Tensor, meta: &LetterboxMeta, conf: f32, iou: f32) -> Result<Vec<Detection>> {
        let raw = self.forward(input)?;
        Ok(nms(&decode(&raw, meta, conf), iou))
    }

    /// Letterbox, forward, decode and NMS for one RGB image.
    pub fn detect(&self, img: &RgbImage, conf: f32, iou: f32) -> Result<Vec<Detection>> {
        let (input, meta) = to_model_input(img, self.meta().input_size)?;
        self.detect_tensor(&input, &meta, conf, iou)
    }
}

/// Letterboxes an RGB image into a `(1, 3, size, size)` input tensor.
pub fn to_model_input(img: &RgbImage, size: usize) -> Result<(Tensor, LetterboxMeta)> {
    letterbox(img.as_raw(), img.width() as usize, img.height() as usize, size)
}
