use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{AnnotatedImage, BoxAnnotation, Dataset};
use crate::error::{contract, Result};
use crate::graph::DEFAULT_CLASS_NAMES;

pub const BACKGROUND: [u8; 3] = [128, 128, 128];
const PLACEMENT_ATTEMPTS: usize = 100;
const GAP: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub num_images: usize,
    pub num_classes: usize,
    pub max_boxes_per_image: usize,
    /// Image width; heights vary between half and all of it.
    pub image_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: Dataset,
    /// Rasters in manifest order.
    pub images: Vec<RgbImage>,
}

pub fn class_shape(class_id: usize) -> ShapeKind {
    if class_id % 2 == 0 {
        ShapeKind::Rect
    } else {
        ShapeKind::Ellipse
    }
}

const PALETTE: [[u8; 3]; 8] = [
    [220, 40, 40],
    [40, 200, 60],
    [40, 80, 230],
    [240, 210, 30],
    [200, 50, 210],
    [30, 210, 210],
    [250, 140, 20],
    [20, 20, 20],
];

/// Distinct, non-background colour per class.
pub fn class_color(class_id: usize) -> [u8; 3] {
    if let Some(c) = PALETTE.get(class_id) {
        return *c;
    }
    let v = (class_id as u32).wrapping_mul(2_654_435_761);
    let c = [(v >> 24) as u8, (v >> 16) as u8, (v >> 8) as u8];
    if c == BACKGROUND {
        [c[0], c[1], c[2] ^ 1]
    } else {
        c
    }
}

fn draw(img: &mut RgbImage, kind: ShapeKind, x0: usize, y0: usize, w: usize, h: usize, color: [u8; 3]) -> Option<(usize, usize, usize, usize)> {
    let (rx, ry) = (w as f64 / 2.0, h as f64 / 2.0);
    let (cx, cy) = (x0 as f64 + rx, y0 as f64 + ry);
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let inside = match kind {
                ShapeKind::Rect => true,
                ShapeKind::Ellipse => {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    dx * dx + dy * dy <= 1.0
                }
            };
            if inside {
                img.put_pixel(x as u32, y as u32, Rgb(color));
                bounds = Some(match bounds {
                    None => (x, y, x + 1, y + 1),
                    Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x + 1), d.max(y + 1)),
                });
            }
        }
    }
    bounds
}

/// Deterministic images of coloured rectangles (even classes) and ellipses
/// (odd classes) on a gray background. Shapes never touch: each keeps a
/// 2-pixel gap to the others. Boxes that cannot be placed are skipped. The
/// first boxes cycle through classes not yet drawn so every class appears
/// when there is room for it.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    let SynthConfig { num_images, num_classes, max_boxes_per_image, image_size, seed } = *cfg;
    if num_images == 0 || num_classes == 0 || max_boxes_per_image == 0 || image_size < 8 {
        contract!("synthetic dataset needs >= 1 image, class and box, and a size >= 8");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = if num_classes == DEFAULT_CLASS_NAMES.len() {
        DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_classes).map(|i| format!("class{i}")).collect()
    };
    let mut missing: Vec<usize> = (0..num_classes).collect();
    let mut records = Vec::with_capacity(num_images);
    let mut rasters = Vec::with_capacity(num_images);
    let s = image_size;
    let (min_side, max_side) = ((s / 8).max(2), (s * 2 / 5).max(3));
    for i in 0..num_images {
        let width = s;
        let height = rng.gen_range(s / 2..=s);
        let mut img = RgbImage::from_pixel(width as u32, height as u32, Rgb(BACKGROUND));
        let mut placed: Vec<(i64, i64, i64, i64)> = Vec::new();
        let mut boxes = Vec::new();
        let n_boxes = rng.gen_range(1..=max_boxes_per_image);
        for _ in 0..n_boxes {
            let class_id = match missing.first() {
                Some(&c) => c,
                None => rng.gen_range(0..num_classes),
            };
            let mut spot = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let w = rng.gen_range(min_side..=max_side.min(width));
                let h = rng.gen_range(min_side..=max_side.min(height));
                let x0 = rng.gen_range(0..=width - w);
                let y0 = rng.gen_range(0..=height - h);
                let r = (x0 as i64, y0 as i64, (x0 + w) as i64, (y0 + h) as i64);
                let clear = placed
                    .iter()
                    .all(|p| r.2 + GAP <= p.0 || p.2 + GAP <= r.0 || r.3 + GAP <= p.1 || p.3 + GAP <= r.1);
                if clear {
                    spot = Some((x0, y0, w, h));
                    break;
                }
            }
            let Some((x0, y0, w, h)) = spot else { continue };
            let Some((bx1, by1, bx2, by2)) = draw(&mut img, class_shape(class_id), x0, y0, w, h, class_color(class_id))
            else {
                continue;
            };
            placed.push((x0 as i64, y0 as i64, (x0 + w) as i64, (y0 + h) as i64));
            missing.retain(|&c| c != class_id);
            let (fw, fh) = (width as f64, height as f64);
            boxes.push(BoxAnnotation {
                class_id,
                cx: (bx1 + bx2) as f64 / 2.0 / fw,
                cy: (by1 + by2) as f64 / 2.0 / fh,
                w: (bx2 - bx1) as f64 / fw,
                h: (by2 - by1) as f64 / fh,
            });
        }
        records.push(AnnotatedImage { image_path: format!("images/img_{i:05}.ppm"), width, height, boxes });
        rasters.push(img);
    }
    Ok(SynthDataset { dataset: Dataset::new(names, records)?, images: rasters })
}
