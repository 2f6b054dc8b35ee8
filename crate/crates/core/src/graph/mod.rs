//! The detector graph and the image-to-detections pipeline around it.

mod detect;
mod exec;
mod letterbox;
mod model;

pub use detect::{decode, detection_order, iou, nms, BBox, Detection};
pub use letterbox::{letterbox, LetterboxMeta, PAD_VALUE};
pub use model::{
    build_model, build_model_named, scale_depth, scale_width, Layer, LayerKind, ModelGraph, ModelMeta, ParamArray,
    BN_EPS, DEFAULT_CLASS_NAMES, DEFAULT_DEPTH_MULTIPLE, DEFAULT_INPUT_SIZE, DEFAULT_WIDTH_MULTIPLE, HEAD_STRIDE,
};
pub(crate) use exec::execute;
pub(crate) use model::check_dag;

pub const DEFAULT_CONF_THRESHOLD: f32 = 0.25;
pub const DEFAULT_IOU_THRESHOLD: f32 = 0.45;
