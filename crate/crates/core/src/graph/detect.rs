use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::letterbox::LetterboxMeta;
use super::model::HEAD_STRIDE;
use crate::error::{contract, Result};
use crate::tensor::{sigmoid, Tensor};

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f32,
    pub y1: f32,
    pub x2: f32,
    pub y2: f32,
}

impl BBox {
    pub fn new(x1: f32, y1: f32, x2: f32, y2: f32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn area(&self) -> f64 {
        ((self.x2 - self.x1).max(0.0) as f64) * ((self.y2 - self.y1).max(0.0) as f64)
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    pub score: f32,
    pub bbox: BBox,
}

impl Detection {
    /// `class_id score x1 y1 x2 y2`, score to 4 decimals and coordinates to 1.
    pub fn to_record(&self) -> String {
        let b = &self.bbox;
        format!("{} {:.4} {:.1} {:.1} {:.1} {:.1}", self.class_id, self.score, b.x1, b.y1, b.x2, b.y2)
    }

    pub fn parse_record(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            contract!("detection record needs 6 fields, got {}", fields.len());
        }
        let class_id = fields[0].parse().map_err(|_| crate::Error::Contract(format!("bad class id {:?}", fields[0])))?;
        let mut nums = [0f32; 5];
        for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| crate::Error::Contract(format!("bad number {f:?}")))?;
        }
        Ok(Self { class_id, score: nums[0], bbox: BBox::new(nums[1], nums[2], nums[3], nums[4]) })
    }
}

/// Intersection over union; zero when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0) as f64;
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0) as f64;
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Ranking shared by NMS and AP matching: score descending, then class id,
/// x1, y1, x2 and y2 ascending. Only fully identical detections tie.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.x1.total_cmp(&b.bbox.x1))
        .then(a.bbox.y1.total_cmp(&b.bbox.y1))
        .then(a.bbox.x2.total_cmp(&b.bbox.x2))
        .then(a.bbox.y2.total_cmp(&b.bbox.y2))
}

/// Greedy per-class non-maximum suppression. A detection is dropped when it
/// overlaps a kept detection of the same class with IoU above the threshold.
pub fn nms(dets: &[Detection], iou_threshold: f32) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(detection_order);
    let num_classes = sorted.iter().map(|d| d.class_id + 1).max().unwrap_or(0);
    let mut kept_by_class: Vec<Vec<BBox>> = vec![Vec::new(); num_classes];
    let mut out = Vec::new();
    for d in sorted {
        let kept = &mut kept_by_class[d.class_id];
        if kept.iter().all(|k| iou(k, &d.bbox) <= iou_threshold as f64) {
            kept.push(d.bbox);
            out.push(d);
        }
    }
    out
}

/// Turns a raw head tensor (1, 4 + K, G, G) into detections in original
/// image coordinates. Per cell the best class is kept if its sigmoid score
/// reaches `conf_threshold`; the box centre is the cell corner plus a
/// sigmoid offset and the size is `min(exp(t), 4)` strides.
pub fn decode(raw: &Tensor, meta: &LetterboxMeta, conf_threshold: f32) -> Vec<Detection> {
    let s = raw.shape();
    let num_classes = s.c.saturating_sub(4);
    let stride = HEAD_STRIDE as f32;
    let mut out = Vec::new();
    if num_classes == 0 {
        return out;
    }
    for gy in 0..s.h {
        for gx in 0..s.w {
            let mut best = 0;
            let mut best_logit = raw.at(0, 4, gy, gx);
            for k in 1..num_classes {
                let v = raw.at(0, 4 + k, gy, gx);
                if v > best_logit {
                    best = k;
                    best_logit = v;
                }
            }
            let score = sigmoid(best_logit);
            if !(score >= conf_threshold) {
                continue;
            }
            let cx = (gx as f32 + sigmoid(raw.at(0, 0, gy, gx))) * stride;
            let cy = (gy as f32 + sigmoid(raw.at(0, 1, gy, gx))) * stride;
            let w = raw.at(0, 2, gy, gx).exp().min(4.0) * stride;
            let h = raw.at(0, 3, gy, gx).exp().min(4.0) * stride;
            let (x1, y1) = meta.to_original(cx - w / 2.0, cy - h / 2.0);
            let (x2, y2) = meta.to_original(cx + w / 2.0, cy + h / 2.0);
            let (ow, oh) = (meta.orig_w as f32, meta.orig_h as f32);
            let bbox = BBox::new(x1.clamp(0.0, ow), y1.clamp(0.0, oh), x2.clamp(0.0, ow), y2.clamp(0.0, oh));
            if bbox.is_valid() {
                out.push(Detection { class_id: best, score, bbox });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn det(class_id: usize, score: f32, x1: f32, y1: f32, x2: f32, y2: f32) -> Detection {
        Detection { class_id, score, bbox: BBox::new(x1, y1, x2, y2) }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(20.0, 20.0, 30.0, 30.0)), 0.0);
        let b = BBox::new(5.0, 0.0, 15.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nms_examples() {
        let single = vec![det(2, 0.3, 1.0, 2.0, 3.0, 4.0)];
        assert_eq!(nms(&single, 0.5), single);
        // IoU of these two is 0.6
        let a = det(0, 0.9, 0.0, 0.0, 10.0, 10.0);
        let b = det(0, 0.8, 2.5, 0.0, 12.5, 10.0);
        assert!((iou(&a.bbox, &b.bbox) - 0.6).abs() < 1e-9);
        assert_eq!(nms(&[b, a], 0.5), vec![a]);
        let c = Detection { class_id: 1, ..b };
        assert_eq!(nms(&[c, a], 0.5), vec![a, c]);
    }

    #[test]
    fn record_round_trip() {
        let d = det(3, 0.98765, 1.25, 2.0, 100.04, 50.96);
        let back = Detection::parse_record(&d.to_record()).unwrap();
        assert_eq!(back.class_id, 3);
        assert!((back.score - d.score).abs() <= 0.00005);
        assert!((back.bbox.x2 - d.bbox.x2).abs() <= 0.05);
        assert!(Detection::parse_record("1 0.5 1 2 3").is_err());
    }

    #[test]
    fn decode_single_hot_cell() {
        let k = 3;
        let g = 4;
        let mut raw = Tensor::full(Shape::new(1, 4 + k, g, g).unwrap(), -10.0);
        let idx = |c: usize, y: usize, x: usize| ((c * g) + y) * g + x;
        for c in 0..4 {
            raw.data_mut()[idx(c, 1, 2)] = 0.0;
        }
        raw.data_mut()[idx(4, 1, 2)] = 4.0;
        let meta = LetterboxMeta::identity(g * HEAD_STRIDE);
        let dets = decode(&raw, &meta, 0.25);
        assert_eq!(dets.len(), 1);
        let d = dets[0];
        assert_eq!(d.class_id, 0);
        assert!((d.score - 0.98201376).abs() < 1e-6);
        // centre (2.5, 1.5) cells, size one stride
        assert_eq!(d.bbox, BBox::new(64.0, 32.0, 96.0, 64.0));
        assert!(decode(&raw, &meta, 1.0).is_empty());
    }
}
