use std::fmt::Write as _;

use crate::error::{contract, Error, Result};

pub const METRICS_HEADER: &str = "model,acc,precision,recall,f1,map50,size_mb,qsize_mb";

/// One model's metrics; absent values render as blank CSV fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRow {
    pub model: String,
    pub acc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub map50: Option<f64>,
    pub size_mb: Option<f64>,
    pub qsize_mb: Option<f64>,
}

pub(crate) fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

pub(crate) fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|e| Error::Contract(format!("bad number {s:?}: {e}")))
}

impl MetricsRow {
    pub fn values(&self) -> [Option<f64>; 7] {
        [self.acc, self.precision, self.recall, self.f1, self.map50, self.size_mb, self.qsize_mb]
    }

    /// Model names are written verbatim with commas and newlines replaced.
    pub fn to_csv_fields(&self) -> Vec<String> {
        std::iter::once(self.model.replace([',', '\n'], "_"))
            .chain(self.values().iter().map(|v| fmt_opt(*v, 4)))
            .collect()
    }

    pub fn from_csv_fields(f: &[&str]) -> Result<Self> {
        if f.len() != 8 {
            contract!("metrics row needs 8 fields, got {}", f.len());
        }
        Ok(Self {
            model: f[0].to_string(),
            acc: parse_opt(f[1])?,
            precision: parse_opt(f[2])?,
            recall: parse_opt(f[3])?,
            f1: parse_opt(f[4])?,
            map50: parse_opt(f[5])?,
            size_mb: parse_opt(f[6])?,
            qsize_mb: parse_opt(f[7])?,
        })
    }
}

pub fn render_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(out, "{}", r.to_csv_fields().join(",")).expect("string write");
    }
    out
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        contract!("metrics csv must start with {METRICS_HEADER:?}");
    }
    lines.map(|l| MetricsRow::from_csv_fields(&l.split(',').collect::<Vec<_>>())).collect()
}
