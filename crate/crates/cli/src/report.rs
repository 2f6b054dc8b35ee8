//! Benchmark rows and the files rendered from them.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

pub const BENCH_HEADER: &str =
    "model,acc,precision,recall,f1,map50,size_mb,qsize_mb,mean_latency_s,peak_mem_bytes,total_carbon_kg";
pub const MEMORY_HEADER: &str = "model,stage,peak_live_tensor_bytes,allocation_count";
pub const EMISSIONS_BY_MODEL_HEADER: &str = "model,stage,duration_s,energy_kwh,carbon_kg";

/// One benchmarked model. Sizes are decimal megabytes (10^6 bytes).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub acc: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub map50: Option<f64>,
    pub size_mb: Option<f64>,
    pub qsize_mb: Option<f64>,
    pub mean_latency_s: Option<f64>,
    pub peak_mem_bytes: Option<u64>,
    pub total_carbon_kg: Option<f64>,
}

pub fn bytes_to_mb(bytes: u64) -> f64 {
    bytes as f64 / 1e6
}

fn fixed(v: Option<f64>, d: usize) -> String {
    v.map(|x| format!("{x:.d$}")).unwrap_or_default()
}

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

fn opt<T: std::str::FromStr>(s: &str, what: &str) -> Result<Option<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse::<T>().with_context(|| format!("bad {what} {s:?}"))?))
    }
}

impl BenchRow {
    pub fn to_csv_line(&self) -> String {
        [
            self.model.replace([',', '\n'], "_"),
            fixed(self.acc, 4),
            fixed(self.precision, 4),
            fixed(self.recall, 4),
            fixed(self.f1, 4),
            fixed(self.map50, 4),
            fixed(self.size_mb, 4),
            fixed(self.qsize_mb, 4),
            fixed(self.mean_latency_s, 6),
            self.peak_mem_bytes.map(|v| v.to_string()).unwrap_or_default(),
            sci(self.total_carbon_kg),
        ]
        .join(",")
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            bail!("bench row needs 11 fields, got {}", f.len());
        }
        Ok(Self {
            model: f[0].to_string(),
            acc: opt(f[1], "acc")?,
            precision: opt(f[2], "precision")?,
            recall: opt(f[3], "recall")?,
            f1: opt(f[4], "f1")?,
            map50: opt(f[5], "map50")?,
            size_mb: opt(f[6], "size_mb")?,
            qsize_mb: opt(f[7], "qsize_mb")?,
            mean_latency_s: opt(f[8], "mean_latency_s")?,
            peak_mem_bytes: opt(f[9], "peak_mem_bytes")?,
            total_carbon_kg: opt(f[10], "total_carbon_kg")?,
        })
    }

    /// The row as it reads back from CSV.
    pub fn rounded(&self) -> Self {
        Self::from_csv_line(&self.to_csv_line()).expect("rendered rows parse")
    }
}

pub fn render_bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in rows {
        writeln!(out, "{}", r.to_csv_line()).expect("string write");
    }
    out
}

pub fn parse_bench_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(BENCH_HEADER) {
        bail!("bench csv must start with {BENCH_HEADER:?}");
    }
    lines.map(BenchRow::from_csv_line).collect()
}

fn cell(v: Option<f64>, d: usize) -> String {
    v.map(|x| format!("{x:.d$}")).unwrap_or_else(|| "-".to_string())
}

/// Markdown report: a results table with the columns Model, Acc, P, R, F1,
/// mAP, Size, Q-Size, followed by a profiling table. Missing values are "-".
pub fn render_markdown(rows: &[BenchRow], failed: &[String]) -> String {
    let mut out = String::from("| Model | Acc | P | R | F1 | mAP | Size (MB) | Q-Size (MB) |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            r.model,
            cell(r.acc, 2),
            cell(r.precision, 2),
            cell(r.recall, 2),
            cell(r.f1, 2),
            cell(r.map50, 2),
            cell(r.size_mb, 1),
            cell(r.qsize_mb, 1),
        )
        .expect("string write");
    }
    out.push_str("\n| Model | Mean latency (s) | Peak live tensor bytes | Carbon (kg CO2e) |\n");
    out.push_str("|---|---|---|---|\n");
    for r in rows {
        writeln!(
            out,
            "| {} | {} | {} | {} |",
            r.model,
            cell(r.mean_latency_s, 4),
            r.peak_mem_bytes.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            r.total_carbon_kg.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into()),
        )
        .expect("string write");
    }
    if !failed.is_empty() {
        writeln!(out, "\nFailed: {}", failed.join(", ")).expect("string write");
    }
    out
}
