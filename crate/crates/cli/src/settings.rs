use std::path::Path;

use anyhow::{bail, Context, Result};
use greenlite_core::graph::{DEFAULT_CONF_THRESHOLD, DEFAULT_IOU_THRESHOLD};
use greenlite_core::profile::{parse_kv, EnergyConfig};

const KEYS: [&str; 4] = ["power", "intensity", "conf", "iou"];

/// Energy constants and thresholds after applying defaults, the optional
/// config file and the environment, in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub energy: EnergyConfig,
    pub conf: f32,
    pub iou: f32,
}

fn threshold(key: &str, v: &str) -> Result<f32> {
    let x: f32 = v.parse().with_context(|| format!("config {key}: {v:?} is not a number"))?;
    if !(0.0..=1.0).contains(&x) {
        bail!("config {key} must lie in [0, 1], got {x}");
    }
    Ok(x)
}

impl Settings {
    pub fn load(config: Option<&Path>, conf_default: f32) -> Result<Self> {
        let mut s = Self { energy: EnergyConfig::default(), conf: conf_default, iou: DEFAULT_IOU_THRESHOLD };
        if let Some(path) = config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let map = parse_kv(&text)?;
            if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
                bail!("{}: unknown config key {k:?}", path.display());
            }
            s.energy.apply(&map)?;
            if let Some(v) = map.get("conf") {
                s.conf = threshold("conf", v)?;
            }
            if let Some(v) = map.get("iou") {
                s.iou = threshold("iou", v)?;
            }
        }
        s.energy.apply_env(|k| std::env::var(k).ok())?;
        Ok(s)
    }

    pub fn with_flags(mut self, conf: Option<f32>, iou: Option<f32>) -> Result<Self> {
        for (name, v) in [("--conf", conf), ("--iou", iou)] {
            if let Some(x) = v {
                if !(0.0..=1.0).contains(&x) {
                    return Err(crate::UsageError(format!("{name} must lie in [0, 1], got {x}")).into());
                }
            }
        }
        self.conf = conf.unwrap_or(self.conf);
        self.iou = iou.unwrap_or(self.iou);
        Ok(self)
    }
}

pub fn detect_defaults() -> f32 {
    DEFAULT_CONF_THRESHOLD
}
