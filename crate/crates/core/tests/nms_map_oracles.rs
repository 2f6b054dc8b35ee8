//! NMS and mAP against brute-force references.

use std::cmp::Ordering;

use greenlite_core::eval::{average_precision, map50, match_detections, GroundTruthBox, Match};
use greenlite_core::graph::{nms, BBox, Detection};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn area(b: &BBox) -> f64 {
    (b.x2 as f64 - b.x1 as f64).max(0.0) * (b.y2 as f64 - b.y1 as f64).max(0.0)
}

fn ref_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) as f64 - a.x1.max(b.x1) as f64).max(0.0);
    let h = (a.y2.min(b.y2) as f64 - a.y1.max(b.y1) as f64).max(0.0);
    let inter = w * h;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Strictly-before relation of the deterministic tie-break.
fn before(a: &Detection, b: &Detection) -> bool {
    let key = |d: &Detection| (-(d.score as f64), d.class_id, d.bbox.x1 as f64, d.bbox.y1 as f64, d.bbox.x2 as f64, d.bbox.y2 as f64);
    key(a).partial_cmp(&key(b)) == Some(Ordering::Less)
}

fn brute_nms(dets: &[Detection], thr: f32) -> Vec<Detection> {
    let mut alive: Vec<bool> = vec![true; dets.len()];
    let mut keep = Vec::new();
    loop {
        // best remaining by linear scan
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if alive[i] && best.is_none_or(|b| before(&dets[i], &dets[b])) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        keep.push(dets[b]);
        for i in 0..dets.len() {
            if alive[i] && dets[i].class_id == dets[b].class_id && (i == b || ref_iou(&dets[i].bbox, &dets[b].bbox) > thr as f64) {
                alive[i] = false;
            }
        }
    }
    keep
}

fn random_dets(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            // coarse grids so ties in score and position actually happen
            let x1 = rng.gen_range(0..20) as f32 * 2.0;
            let y1 = rng.gen_range(0..20) as f32 * 2.0;
            let w = rng.gen_range(1..12) as f32 * 2.0;
            let h = rng.gen_range(1..12) as f32 * 2.0;
            Detection {
                class_id: rng.gen_range(0..classes),
                score: rng.gen_range(1..=8) as f32 / 8.0,
                bbox: BBox::new(x1, y1, x1 + w, y1 + h),
            }
        })
        .collect()
}

#[test]
fn nms_equals_brute_force_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for trial in 0..1500 {
        let n = rng.gen_range(0..30);
        let classes = rng.gen_range(1..4);
        let dets = random_dets(&mut rng, n, classes);
        let thr = [0.0, 0.3, 0.45, 0.5, 0.7, 1.0][trial % 6];
        assert_eq!(nms(&dets, thr), brute_nms(&dets, thr), "trial {trial}");
    }
}

#[test]
fn nms_singleton_and_class_partition() {
    let d = Detection { class_id: 2, score: 0.3, bbox: BBox::new(1.0, 2.0, 3.0, 4.0) };
    assert_eq!(nms(&[d], 0.5), vec![d]);
    let e = Detection { class_id: 1, ..d };
    assert_eq!(nms(&[d, e], 0.0).len(), 2);
    // IoU 0.6: (0,0,16,10) and (4,0,20,10) share 12 of 20 columns
    let a = Detection { class_id: 0, score: 0.9, bbox: BBox::new(0.0, 0.0, 16.0, 10.0) };
    let b = Detection { class_id: 0, score: 0.8, bbox: BBox::new(4.0, 0.0, 20.0, 10.0) };
    assert!((ref_iou(&a.bbox, &b.bbox) - 0.6).abs() < 1e-12);
    assert_eq!(nms(&[b, a], 0.5), vec![a]);
}

proptest! {
    #[test]
    fn nms_is_idempotent(seed in any::<u64>(), n in 0usize..40, thr in 0.0f32..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dets(&mut rng, n, 3);
        let once = nms(&d, thr);
        prop_assert_eq!(nms(&once, thr), once);
    }
}

/// Lexicographically best assignment over every partial injection of
/// detections (in tie-break order) into same-class ground truth. Key per
/// detection: matched IoU, then lower ground-truth index.
fn oracle_assignment(dets: &[Detection], gts: &[GroundTruthBox], thr: f64) -> Vec<bool> {
    fn search(
        i: usize,
        dets: &[Detection],
        gts: &[GroundTruthBox],
        thr: f64,
        used: &mut Vec<bool>,
        key: &mut Vec<(f64, i64)>,
        best: &mut Option<Vec<(f64, i64)>>,
    ) {
        if i == dets.len() {
            let better = match best {
                None => true,
                Some(b) => key.iter().zip(b.iter()).find_map(|(k, b)| k.partial_cmp(b).filter(|o| *o != Ordering::Equal)) == Some(Ordering::Greater),
            };
            if better {
                *best = Some(key.clone());
            }
            return;
        }
        key.push((-1.0, 0));
        search(i + 1, dets, gts, thr, used, key, best);
        key.pop();
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.class_id != dets[i].class_id {
                continue;
            }
            let v = ref_iou(&dets[i].bbox, &g.bbox);
            if v < thr {
                continue;
            }
            used[j] = true;
            key.push((v, -(j as i64)));
            search(i + 1, dets, gts, thr, used, key, best);
            key.pop();
            used[j] = false;
        }
    }
    let mut best = None;
    search(0, dets, gts, thr, &mut vec![false; gts.len()], &mut Vec::new(), &mut best);
    best.unwrap().iter().map(|k| k.0 >= 0.0).collect()
}

/// AP from the definition: for each recall step, the best precision at any
/// rank reaching at least that recall.
fn oracle_ap(tp: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return if tp.is_empty() { None } else { Some(0.0) };
    }
    let n = tp.len();
    let cum: Vec<usize> = tp.iter().scan(0, |s, &t| { *s += t as usize; Some(*s) }).collect();
    let mut ap = 0.0;
    for step in 1..=num_gt {
        let r = step as f64 / num_gt as f64;
        let best = (0..n)
            .filter(|&i| cum[i] as f64 / num_gt as f64 >= r)
            .map(|i| cum[i] as f64 / (i + 1) as f64)
            .fold(0.0, f64::max);
        ap += best / num_gt as f64;
    }
    Some(ap)
}

fn sorted(mut d: Vec<Detection>) -> Vec<Detection> {
    d.sort_by(|a, b| if before(a, b) { Ordering::Less } else if before(b, a) { Ordering::Greater } else { Ordering::Equal });
    d
}

fn oracle_map(dets: &[Vec<Detection>], gts: &[Vec<GroundTruthBox>], k: usize) -> (Vec<Option<f64>>, f64) {
    let mut per_class: Vec<Vec<(Detection, bool)>> = vec![Vec::new(); k];
    let mut num_gt = vec![0; k];
    for (d, g) in dets.iter().zip(gts) {
        let d = sorted(d.clone());
        let tp = oracle_assignment(&d, g, 0.5);
        for (x, t) in d.into_iter().zip(tp) {
            per_class[x.class_id].push((x, t));
        }
        for b in g {
            num_gt[b.class_id] += 1;
        }
    }
    let aps: Vec<Option<f64>> = (0..k)
        .map(|c| {
            let mut m = per_class[c].clone();
            m.sort_by(|a, b| if before(&a.0, &b.0) { Ordering::Less } else if before(&b.0, &a.0) { Ordering::Greater } else { Ordering::Equal });
            oracle_ap(&m.iter().map(|x| x.1).collect::<Vec<_>>(), num_gt[c])
        })
        .collect();
    let present: Vec<f64> = (0..k).filter(|&c| num_gt[c] > 0).map(|c| aps[c].unwrap()).collect();
    let map = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    (aps, map)
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<Detection>>, Vec<Vec<GroundTruthBox>>) {
    let images = rng.gen_range(1..=4);
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..images {
        let mut g = Vec::new();
        let mut d = Vec::new();
        for class_id in 0..2 {
            for _ in 0..rng.gen_range(0..=3) {
                let x = rng.gen_range(0..6) as f32 * 8.0;
                let y = rng.gen_range(0..6) as f32 * 8.0;
                g.push(GroundTruthBox { class_id, bbox: BBox::new(x, y, x + 16.0, y + 16.0) });
            }
            for _ in 0..rng.gen_range(0..=5) {
                let x = rng.gen_range(0..12) as f32 * 4.0;
                let y = rng.gen_range(0..12) as f32 * 4.0;
                let s = rng.gen_range(3..6) as f32 * 4.0;
                d.push(Detection { class_id, score: rng.gen_range(1..=6) as f32 / 6.0, bbox: BBox::new(x, y, x + s, y + s) });
            }
        }
        dets.push(d);
        gts.push(g);
    }
    (dets, gts)
}

#[test]
fn map_equals_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for trial in 0..600 {
        let (dets, gts) = random_instance(&mut rng);
        for (d, g) in dets.iter().zip(&gts) {
            let flags: Vec<bool> = match_detections(d, g, 0.5).iter().map(|m| m.true_positive).collect();
            assert_eq!(flags, oracle_assignment(&sorted(d.clone()), g, 0.5), "trial {trial}");
        }
        let got = map50(&dets, &gts, 2).unwrap();
        let (aps, m) = oracle_map(&dets, &gts, 2);
        for (a, b) in got.per_class_ap.iter().zip(&aps) {
            match (a, b) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "trial {trial}: {a} vs {b}"),
                _ => panic!("trial {trial}: {a:?} vs {b:?}"),
            }
        }
        assert!((got.map - m).abs() < 1e-12, "trial {trial}: {} vs {m}", got.map);
    }
}

#[test]
fn hand_fixture_ap_is_five_sixths() {
    let d = |s: f32| Detection { class_id: 0, score: s, bbox: BBox::new(0.0, 0.0, 1.0, 1.0) };
    let m = [(d(0.9), true), (d(0.8), false), (d(0.7), true)].map(|(detection, true_positive)| Match { detection, true_positive });
    assert!((average_precision(&m, 2).unwrap() - 5.0 / 6.0).abs() < 1e-9);
    assert!((oracle_ap(&[true, false, true], 2).unwrap() - 5.0 / 6.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ap_ignores_detection_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dets, gts) = random_instance(&mut rng);
        let m = match_detections(&dets[0], &gts[0], 0.5);
        let n = gts[0].iter().filter(|g| g.class_id == 0).count();
        let class0: Vec<Match> = m.into_iter().filter(|x| x.detection.class_id == 0).collect();
        let mut rev = class0.clone();
        rev.reverse();
        prop_assert_eq!(average_precision(&class0, n), average_precision(&rev, n));
        let mut shuffled = dets.clone();
        shuffled[0].reverse();
        prop_assert_eq!(map50(&dets, &gts, 2).unwrap(), map50(&shuffled, &gts, 2).unwrap());
    }

    #[test]
    fn duplicate_of_matched_detection_never_raises_ap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut dets, gts) = random_instance(&mut rng);
        let before_map = map50(&dets, &gts, 2).unwrap();
        // a duplicate whose only eligible ground truth is the one already taken
        let eligible = |d: &Detection| gts[0].iter().filter(|g| g.class_id == d.class_id && ref_iou(&d.bbox, &g.bbox) >= 0.5).count();
        let matched = match_detections(&dets[0], &gts[0], 0.5)
            .into_iter()
            .find(|m| m.true_positive && eligible(&m.detection) == 1);
        if let Some(m) = matched {
            dets[0].push(m.detection);
            let after = map50(&dets, &gts, 2).unwrap();
            let c = m.detection.class_id;
            prop_assert!(after.per_class_ap[c].unwrap() <= before_map.per_class_ap[c].unwrap() + 1e-12);
        }
    }
}
