use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::graph::ModelGraph;
use crate::tensor::Tensor;

/// Slot name under which the network input range is recorded.
pub const INPUT_SLOT: &str = "input";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotStats {
    pub min: f32,
    pub max: f32,
    pub count: u64,
}

impl SlotStats {
    fn observe(&mut self, t: &Tensor) {
        for &v in t.data() {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
    }

    fn merge(&mut self, other: &SlotStats) {
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.count += other.count;
    }
}

impl Default for SlotStats {
    fn default() -> Self {
        Self { min: f32::INFINITY, max: f32::NEG_INFINITY, count: 0 }
    }
}

/// Running min/max of every activation slot seen during calibration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub slots: BTreeMap<String, SlotStats>,
}

impl CalibrationStats {
    pub fn get(&self, slot: &str) -> Option<&SlotStats> {
        self.slots.get(slot).filter(|s| s.count > 0)
    }

    pub fn observe(&mut self, slot: &str, t: &Tensor) {
        self.slots.entry(slot.to_string()).or_default().observe(t);
    }

    pub fn merge(&mut self, other: &CalibrationStats) {
        for (k, v) in &other.slots {
            self.slots.entry(k.clone()).or_default().merge(v);
        }
    }
}

/// Runs the float model over every image, recording per-slot min/max.
pub fn calibrate(model: &ModelGraph, images: &[Tensor]) -> Result<CalibrationStats> {
    if images.is_empty() {
        contract!("calibration needs at least one image");
    }
    let mut stats = CalibrationStats::default();
    for img in images {
        stats.observe(INPUT_SLOT, img);
        model.forward_observed(img, &mut |name, t| stats.observe(name, t))?;
    }
    Ok(stats)
}

const HISTOGRAM_BINS: usize = 2048;

/// Percentile calibration: a min/max pass followed by a histogram pass; each
/// slot's range is clipped to the `[1 - p, p]` quantiles. Not the default;
/// the plain min/max recipe is.
pub fn calibrate_percentile(model: &ModelGraph, images: &[Tensor], percentile: f64) -> Result<CalibrationStats> {
    if !(0.5..=1.0).contains(&percentile) {
        contract!("percentile must lie in [0.5, 1], got {percentile}");
    }
    let full = calibrate(model, images)?;
    let mut hist: BTreeMap<String, Vec<u64>> =
        full.slots.keys().map(|k| (k.clone(), vec![0u64; HISTOGRAM_BINS])).collect();
    let mut record = |name: &str, t: &Tensor| {
        let s = full.slots[name];
        let h = hist.get_mut(name).expect("slot seen in first pass");
        let width = (s.max - s.min) as f64;
        for &v in t.data() {
            let bin = if width > 0.0 {
                (((v - s.min) as f64 / width) * HISTOGRAM_BINS as f64) as usize
            } else {
                0
            };
            h[bin.min(HISTOGRAM_BINS - 1)] += 1;
        }
    };
    for img in images {
        record(INPUT_SLOT, img);
        model.forward_observed(img, &mut |name, t| record(name, t))?;
    }
    let mut out = full.clone();
    for (name, s) in out.slots.iter_mut() {
        let h = &hist[name];
        let total: u64 = h.iter().sum();
        let width = (s.max - s.min) as f64 / HISTOGRAM_BINS as f64;
        let cut = ((1.0 - percentile) * total as f64).floor() as u64;
        let (mut lo_bin, mut acc) = (0, 0u64);
        while lo_bin < HISTOGRAM_BINS - 1 && acc + h[lo_bin] <= cut {
            acc += h[lo_bin];
            lo_bin += 1;
        }
        let (mut hi_bin, mut acc) = (HISTOGRAM_BINS - 1, 0u64);
        while hi_bin > lo_bin && acc + h[hi_bin] <= cut {
            acc += h[hi_bin];
            hi_bin -= 1;
        }
        let lo = s.min as f64 + lo_bin as f64 * width;
        let hi = s.min as f64 + (hi_bin + 1) as f64 * width;
        s.min = (lo as f32).max(s.min);
        s.max = (hi as f32).min(s.max);
    }
    Ok(out)
}
