//! Latency, live-memory, energy and carbon accounting.

mod energy;
mod latency;
pub mod memory;

pub use energy::{
    emissions, estimate_energy, parse_emissions_csv, parse_kv, render_emissions_csv, stage_report, EmissionRecord,
    EnergyConfig, Stage, StageReport, StageTotal, DEFAULT_INTENSITY_KG_PER_KWH, DEFAULT_POWER_WATTS, ENV_INTENSITY,
    ENV_POWER_W,
};
pub use latency::{time_stage, LatencyStats};
pub use memory::{current_stats, track_memory, MemoryStats, TrackedBuf};
