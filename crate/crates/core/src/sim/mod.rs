//! Simulation engine, traces, metrics and scenario presets.

pub mod engine;
pub mod metrics;
pub mod presets;
pub mod render;
pub mod trace;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

pub use engine::{initial_positions, load_field, EngineOptions, PairLink, RunSummary, Simulation, StopReason};
pub use metrics::{MetricsRow, METRICS_HEADER};
pub use render::{render_svg, seed_origin};
pub use trace::{CsvSink, MemorySink, NullSink, PairRow, TraceRow, TraceSink};

use crate::config::{serialize_config, ScenarioConfig};
use crate::error::Result;

/// Runs a scenario and writes `trace.csv`, `pairs.csv` (when enabled),
/// `metrics.csv`, `summary.json` and the effective `config.cfg` into `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.cfg"), serialize_config(cfg))?;
    let trace = BufWriter::new(File::create(dir.join("trace.csv"))?);
    let pairs = if cfg.output.pair_trace {
        Some(BufWriter::new(File::create(dir.join("pairs.csv"))?))
    } else {
        None
    };
    let mut sink = CsvSink::new(trace, pairs)?;
    let mut sim = Simulation::new(cfg.clone())?;
    let summary = sim.run(&mut sink)?;
    sink.flush()?;

    let mut m = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    writeln!(m, "{METRICS_HEADER}")?;
    for row in &sim.metrics {
        writeln!(m, "{}", row.to_csv())?;
    }
    m.flush()?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// Runs a scenario without producing files.
pub fn run_quiet(cfg: &ScenarioConfig) -> Result<(Simulation, RunSummary)> {
    let mut sim = Simulation::new(cfg.clone())?;
    let summary = sim.run(&mut NullSink)?;
    Ok((sim, summary))
}
