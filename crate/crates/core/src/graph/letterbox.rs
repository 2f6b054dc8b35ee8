use crate::error::{contract, Result};
use crate::tensor::{Shape, Tensor};

/// Gray fill used for the letterbox border, normalized.
pub const PAD_VALUE: f32 = 114.0 / 255.0;

/// How an original image was placed into the square network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LetterboxMeta {
    pub scale: f32,
    pub pad_x: f32,
    pub pad_y: f32,
    pub orig_w: usize,
    pub orig_h: usize,
}

impl LetterboxMeta {
    /// Identity placement for an image that already is the network size.
    pub fn identity(size: usize) -> Self {
        Self { scale: 1.0, pad_x: 0.0, pad_y: 0.0, orig_w: size, orig_h: size }
    }

    pub fn to_input(&self, x: f32, y: f32) -> (f32, f32) {
        (x * self.scale + self.pad_x, y * self.scale + self.pad_y)
    }

    pub fn to_original(&self, x: f32, y: f32) -> (f32, f32) {
        ((x - self.pad_x) / self.scale, (y - self.pad_y) / self.scale)
    }
}

/// Aspect-preserving bilinear resize of an 8-bit RGB image into a centered
/// `target x target` canvas, normalized to [0, 1], as a (1, 3, S, S) tensor.
pub fn letterbox(rgb: &[u8], width: usize, height: usize, target: usize) -> Result<(Tensor, LetterboxMeta)> {
    if width == 0 || height == 0 || target == 0 {
        contract!("letterbox needs a non-empty image and target, got {width}x{height} -> {target}");
    }
    if rgb.len() != width * height * 3 {
        contract!("expected {} RGB bytes for {width}x{height}, got {}", width * height * 3, rgb.len());
    }
    let scale = (target as f64 / width as f64).min(target as f64 / height as f64);
    let new_w = ((width as f64 * scale).round() as usize).clamp(1, target);
    let new_h = ((height as f64 * scale).round() as usize).clamp(1, target);
    let left = (target - new_w) / 2;
    let top = (target - new_h) / 2;
    let sx = width as f64 / new_w as f64;
    let sy = height as f64 / new_h as f64;

    let shape = Shape::new(1, 3, target, target)?;
    let plane = target * target;
    let mut data = vec![PAD_VALUE; 3 * plane];
    for dy in 0..new_h {
        let (y0, y1, fy) = source_coord(dy, sy, height);
        for dx in 0..new_w {
            let (x0, x1, fx) = source_coord(dx, sx, width);
            let px = |x: usize, y: usize, c: usize| rgb[(y * width + x) * 3 + c] as f64;
            for c in 0..3 {
                let top_v = px(x0, y0, c) * (1.0 - fx) + px(x1, y0, c) * fx;
                let bot_v = px(x0, y1, c) * (1.0 - fx) + px(x1, y1, c) * fx;
                let v = top_v * (1.0 - fy) + bot_v * fy;
                data[c * plane + (top + dy) * target + left + dx] = (v / 255.0) as f32;
            }
        }
    }
    let meta = LetterboxMeta { scale: scale as f32, pad_x: left as f32, pad_y: top as f32, orig_w: width, orig_h: height };
    Ok((Tensor::new(shape, data)?, meta))
}

/// Half-pixel-centre source sample for destination index `d`.
fn source_coord(d: usize, ratio: f64, limit: usize) -> (usize, usize, f64) {
    let s = ((d as f64 + 0.5) * ratio - 0.5).clamp(0.0, (limit - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(limit - 1);
    (i0, i1, s - i0 as f64)
}
