use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub warmup_count: usize,
    pub sample_count: usize,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl LatencyStats {
    /// Summary of recorded durations. Percentiles use the nearest-rank rule.
    pub fn from_samples(warmup_count: usize, samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            contract!("latency needs at least one sample");
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |p: f64| {
            let r = (p * sorted.len() as f64).ceil() as usize;
            sorted[r.clamp(1, sorted.len()) - 1]
        };
        let min = sorted[0];
        let max = sorted[sorted.len() - 1];
        let mean = (samples.iter().sum::<f64>() / samples.len() as f64).clamp(min, max);
        Ok(Self {
            warmup_count,
            sample_count: samples.len(),
            mean_s: mean,
            p50_s: rank(0.5),
            p95_s: rank(0.95),
            min_s: min,
            max_s: max,
        })
    }
}

/// Runs `action` `warmup` times untimed, then `iterations` timed runs on
/// a monotonic clock. The first failure aborts timing and is returned.
pub fn time_stage<T, E>(
    mut action: impl FnMut() -> std::result::Result<T, E>,
    warmup: usize,
    iterations: usize,
) -> std::result::Result<LatencyStats, E>
where
    E: From<crate::error::Error>,
{
    if iterations == 0 {
        return Err(crate::error::Error::Contract("iterations must be >= 1".into()).into());
    }
    for _ in 0..warmup {
        action()?;
    }
    let mut samples = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        let out = action()?;
        samples.push(start.elapsed().as_secs_f64());
        drop(out);
    }
    Ok(LatencyStats::from_samples(warmup, &samples)?)
}
