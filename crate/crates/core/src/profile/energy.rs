use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

pub const DEFAULT_POWER_WATTS: f64 = 15.0;
pub const DEFAULT_INTENSITY_KG_PER_KWH: f64 = 0.475;
pub const ENV_INTENSITY: &str = "GREENLITE_INTENSITY";
pub const ENV_POWER_W: &str = "GREENLITE_POWER_W";

const JOULES_PER_KWH: f64 = 3.6e6;

/// kWh drawn by `power_watts` over `duration_s`.
pub fn estimate_energy(power_watts: f64, duration_s: f64) -> Result<f64> {
    if !(power_watts >= 0.0 && duration_s >= 0.0) {
        contract!("power and duration must be non-negative, got {power_watts} W for {duration_s} s");
    }
    Ok(power_watts * duration_s / JOULES_PER_KWH)
}

/// kg CO2e for `energy_kwh` at `intensity_kg_per_kwh`.
pub fn emissions(energy_kwh: f64, intensity_kg_per_kwh: f64) -> f64 {
    energy_kwh * intensity_kg_per_kwh
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Calibrate,
    Quantize,
    Inference,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Load, Stage::Calibrate, Stage::Quantize, Stage::Inference, Stage::Evaluate];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Calibrate => "calibrate",
            Stage::Quantize => "quantize",
            Stage::Inference => "inference",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Contract(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub stage: Stage,
    pub duration_s: f64,
    pub energy_kwh: f64,
    pub carbon_kg: f64,
    pub power_watts_assumed: f64,
    pub intensity_kg_per_kwh: f64,
}

impl EmissionRecord {
    pub fn new(stage: Stage, duration_s: f64, config: &EnergyConfig) -> Result<Self> {
        if !(config.intensity_kg_per_kwh >= 0.0) {
            contract!("carbon intensity must be non-negative");
        }
        let energy_kwh = estimate_energy(config.power_watts, duration_s)?;
        Ok(Self {
            stage,
            duration_s,
            energy_kwh,
            carbon_kg: emissions(energy_kwh, config.intensity_kg_per_kwh),
            power_watts_assumed: config.power_watts,
            intensity_kg_per_kwh: config.intensity_kg_per_kwh,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTotal {
    pub duration_s: f64,
    pub energy_kwh: f64,
    pub carbon_kg: f64,
}

impl StageTotal {
    fn add(&mut self, other: &StageTotal) {
        self.duration_s += other.duration_s;
        self.energy_kwh += other.energy_kwh;
        self.carbon_kg += other.carbon_kg;
    }

    fn rounded(&self) -> Self {
        let r = |v: f64| format!("{v:.6}").parse::<f64>().expect("formatted float");
        Self { duration_s: r(self.duration_s), energy_kwh: r(self.energy_kwh), carbon_kg: r(self.carbon_kg) }
    }
}

/// Per-stage sums in stage order, plus the total over all stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stages: BTreeMap<Stage, StageTotal>,
    pub total: StageTotal,
}

impl StageReport {
    /// The report as it reads back from its CSV form.
    pub fn rounded(&self) -> Self {
        Self {
            stages: self.stages.iter().map(|(k, v)| (*k, v.rounded())).collect(),
            total: self.total.rounded(),
        }
    }
}

/// Groups records by stage. The total is the sum of the stage totals, so
/// it equals the sum of the parts exactly.
pub fn stage_report(records: &[EmissionRecord]) -> StageReport {
    let mut stages: BTreeMap<Stage, StageTotal> = BTreeMap::new();
    for r in records {
        stages.entry(r.stage).or_default().add(&StageTotal {
            duration_s: r.duration_s,
            energy_kwh: r.energy_kwh,
            carbon_kg: r.carbon_kg,
        });
    }
    let mut total = StageTotal::default();
    for t in stages.values() {
        total.add(t);
    }
    StageReport { stages, total }
}

const EMISSIONS_HEADER: &str = "stage,duration_s,energy_kwh,carbon_kg";

pub fn render_emissions_csv(report: &StageReport) -> String {
    let mut out = format!("{EMISSIONS_HEADER}\n");
    let mut row = |name: &str, t: &StageTotal| {
        writeln!(out, "{name},{:.6},{:.6},{:.6}", t.duration_s, t.energy_kwh, t.carbon_kg).expect("string write");
    };
    for (stage, t) in &report.stages {
        row(stage.as_str(), t);
    }
    row("total", &report.total);
    out
}

pub fn parse_emissions_csv(text: &str) -> Result<StageReport> {
    let mut lines = text.lines();
    if lines.next() != Some(EMISSIONS_HEADER) {
        contract!("emissions csv must start with {EMISSIONS_HEADER:?}");
    }
    let mut report = StageReport::default();
    let mut saw_total = false;
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            contract!("emissions csv line {}: expected 4 fields", i + 2);
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Contract(format!("line {}: {e}", i + 2)));
        let t = StageTotal { duration_s: num(f[1])?, energy_kwh: num(f[2])?, carbon_kg: num(f[3])? };
        if f[0] == "total" {
            report.total = t;
            saw_total = true;
        } else {
            report.stages.insert(f[0].parse()?, t);
        }
    }
    if !saw_total {
        contract!("emissions csv has no total row");
    }
    Ok(report)
}

/// Assumed device power and grid carbon intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub power_watts: f64,
    pub intensity_kg_per_kwh: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { power_watts: DEFAULT_POWER_WATTS, intensity_kg_per_kwh: DEFAULT_INTENSITY_KG_PER_KWH }
    }
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            contract!("config line {}: expected key=value", i + 1);
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn non_negative(key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.is_finite() => Ok(x),
        _ => contract!("{key} must be a non-negative number, got {v:?}"),
    }
}

impl EnergyConfig {
    /// Applies `power` and `intensity` keys; other keys are left to the caller.
    pub fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        if let Some(v) = map.get("power") {
            self.power_watts = non_negative("power", v)?;
        }
        if let Some(v) = map.get("intensity") {
            self.intensity_kg_per_kwh = non_negative("intensity", v)?;
        }
        Ok(())
    }

    /// Applies overrides from an environment lookup.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = get(ENV_POWER_W) {
            self.power_watts = non_negative(ENV_POWER_W, &v)?;
        }
        if let Some(v) = get(ENV_INTENSITY) {
            self.intensity_kg_per_kwh = non_negative(ENV_INTENSITY, &v)?;
        }
        Ok(())
    }

    /// Defaults, then the config text (if any), then the process environment.
    pub fn resolve(config_text: Option<&str>) -> Result<Self> {
        let mut c = Self::default();
        if let Some(text) = config_text {
            c.apply(&parse_kv(text)?)?;
        }
        c.apply_env(|k| std::env::var(k).ok())?;
        Ok(c)
    }

    pub fn to_config_string(&self) -> String {
        format!("power={:.6}\nintensity={:.6}\n", self.power_watts, self.intensity_kg_per_kwh)
    }
}
