use serde::Serialize;

use crate::error::{contract, Result};
use crate::graph::{detection_order, iou, BBox, Detection};

pub const MAP_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundTruthBox {
    pub class_id: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Match {
    pub detection: Detection,
    pub true_positive: bool,
}

fn sort_matches(matches: &mut [Match]) {
    matches.sort_by(|a, b| detection_order(&a.detection, &b.detection));
}

/// Greedy matching in detection order: each detection takes the unmatched
/// same-class ground truth of highest IoU, if that IoU reaches `iou_thr`.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruthBox], iou_thr: f64) -> Vec<Match> {
    let mut order: Vec<Detection> = dets.to_vec();
    order.sort_by(detection_order);
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] || g.class_id != d.class_id {
                    continue;
                }
                let v = iou(&d.bbox, &g.bbox);
                if v >= iou_thr && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                taken[j] = true;
            }
            Match { detection: d, true_positive: best.is_some() }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f32,
}

/// One point per detection, in detection order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

pub fn pr_curve(matches: &[Match], num_gt: usize) -> PrCurve {
    let mut m = matches.to_vec();
    sort_matches(&mut m);
    let mut tp = 0usize;
    let points = m
        .iter()
        .enumerate()
        .map(|(i, x)| {
            tp += x.true_positive as usize;
            PrPoint {
                recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
                precision: tp as f64 / (i + 1) as f64,
                threshold: x.detection.score,
            }
        })
        .collect();
    PrCurve { points }
}

/// All-point interpolated AP of one class. `None` when the class has
/// neither ground truth nor detections.
pub fn average_precision(matches: &[Match], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return if matches.is_empty() { None } else { Some(0.0) };
    }
    let curve = pr_curve(matches, num_gt).points;
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (p, env) in curve.iter().zip(&envelope) {
        if p.recall > prev {
            ap += (p.recall - prev) * env;
            prev = p.recall;
        }
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    /// Indexed by class; `None` for classes with no ground truth and no
    /// detections.
    pub per_class_ap: Vec<Option<f64>>,
    /// Mean AP over classes that have ground truth; 0 when none do.
    pub map: f64,
}

fn check_inputs(dets: &[Vec<Detection>], gts: &[Vec<GroundTruthBox>], k: usize) -> Result<()> {
    if dets.len() != gts.len() {
        contract!("detections for {} images but ground truth for {}", dets.len(), gts.len());
    }
    let bad = dets.iter().flatten().map(|d| d.class_id).chain(gts.iter().flatten().map(|g| g.class_id)).find(|&c| c >= k);
    if let Some(c) = bad {
        contract!("class id {c} out of range for K={k}");
    }
    Ok(())
}

fn pooled_matches(dets: &[Vec<Detection>], gts: &[Vec<GroundTruthBox>], k: usize) -> (Vec<Vec<Match>>, Vec<usize>) {
    let mut per_class: Vec<Vec<Match>> = vec![Vec::new(); k];
    let mut num_gt = vec![0usize; k];
    for (d, g) in dets.iter().zip(gts) {
        for m in match_detections(d, g, MAP_IOU_THRESHOLD) {
            per_class[m.detection.class_id].push(m);
        }
        for b in g {
            num_gt[b.class_id] += 1;
        }
    }
    (per_class, num_gt)
}

/// mAP at IoU 0.5 over a set of images.
pub fn map50(dets: &[Vec<Detection>], gts: &[Vec<GroundTruthBox>], k: usize) -> Result<MapResult> {
    check_inputs(dets, gts, k)?;
    let (per_class, num_gt) = pooled_matches(dets, gts, k);
    Ok(map_from(&per_class, &num_gt))
}

fn map_from(per_class: &[Vec<Match>], num_gt: &[usize]) -> MapResult {
    let per_class_ap: Vec<Option<f64>> =
        per_class.iter().zip(num_gt).map(|(m, &n)| average_precision(m, n)).collect();
    let present: Vec<f64> =
        per_class_ap.iter().zip(num_gt).filter(|(_, &n)| n > 0).map(|(ap, _)| ap.unwrap_or(0.0)).collect();
    let map = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    MapResult { per_class_ap, map }
}

/// Micro-averaged detection precision / recall / F1 at one score threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Lowest kept score, `None` when nothing is kept.
    pub threshold: Option<f32>,
}

/// The operating point that maximizes micro-F1 over all score thresholds.
/// Ties go to the higher threshold.
pub fn detection_prf(matches: &[Match], num_gt: usize) -> Prf {
    let mut m = matches.to_vec();
    m.sort_by(|a, b| b.detection.score.total_cmp(&a.detection.score));
    let mut best = Prf::default();
    let mut tp = 0usize;
    for (i, x) in m.iter().enumerate() {
        tp += x.true_positive as usize;
        if m.get(i + 1).is_some_and(|n| n.detection.score == x.detection.score) {
            continue;
        }
        let p = tp as f64 / (i + 1) as f64;
        let r = if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        if best.threshold.is_none() || f > best.f1 {
            best = Prf { precision: p, recall: r, f1: f, threshold: Some(x.detection.score) };
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub map: MapResult,
    pub prf: Prf,
}

pub fn evaluate_detections(dets: &[Vec<Detection>], gts: &[Vec<GroundTruthBox>], k: usize) -> Result<DetectionReport> {
    check_inputs(dets, gts, k)?;
    let (per_class, num_gt) = pooled_matches(dets, gts, k);
    let all: Vec<Match> = per_class.iter().flatten().copied().collect();
    Ok(DetectionReport { map: map_from(&per_class, &num_gt), prf: detection_prf(&all, num_gt.iter().sum()) })
}
