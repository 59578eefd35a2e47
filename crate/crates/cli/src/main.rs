use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use swarm_relloc::checks;
use swarm_relloc::config::{parse_config, serialize_config, EstimatorKind, ScenarioConfig, ScenarioKind};
use swarm_relloc::shape::ShapeField;
use swarm_relloc::sim::trace::parse_trace;
use swarm_relloc::sim::{load_field, presets, render_svg, run_to_dir, seed_origin, RunSummary, Simulation};

const OUT_ENV: &str = "SWARM_RELLOC_OUT";

#[derive(Parser)]
#[command(name = "swarm-relloc", version, about = "Range-and-odometry relative localization and shape formation for robot swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file; the built-in preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config value, then $SWARM_RELLOC_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulated-time cap in seconds.
    #[arg(long)]
    max_time: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Cl,
    Pe,
}

#[derive(Subcommand)]
enum Command {
    /// Two-robot docking onto a static landmark.
    Docking {
        #[command(flatten)]
        run: RunArgs,
        /// Use the noisy ranging preset.
        #[arg(long)]
        noisy: bool,
    },
    /// Five-robot offset formation on a fixed graph.
    Formation {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "cl")]
        estimator: Estimator,
        #[arg(long)]
        noisy: bool,
    },
    /// Shape formation on a grid.
    Shape {
        #[command(flatten)]
        run: RunArgs,
        /// Built-in grid for the preset (`dart` or `letter-r`).
        #[arg(long, default_value = "dart")]
        shape: String,
        /// Robot count for the preset.
        #[arg(long, default_value_t = 50)]
        n: usize,
    },
    /// Runs the estimator and agreement property suites.
    CheckTheorems {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Runs independent seeds of one scenario and aggregates final metrics.
    StatBatch {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        runs: u64,
    },
    /// Draws a trace as SVG.
    Render {
        /// trace.csv to draw.
        #[arg(long)]
        trace: PathBuf,
        /// Scenario file supplying the shape (defaults to config.cfg next to the trace).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file (default: trajectories.svg next to the trace).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prints a preset as a scenario file.
    ShowConfig {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(presets::PRESETS))]
        preset: String,
    },
}

fn load(run: &RunArgs, kind: ScenarioKind, preset: impl FnOnce() -> ScenarioConfig) -> Result<ScenarioConfig> {
    let mut cfg = match &run.config {
        Some(path) => parse_config(path).with_context(|| format!("reading {}", path.display()))?,
        None => preset(),
    };
    if cfg.scenario.kind != kind {
        bail!(
            "config describes a {:?} scenario, but the {:?} command was used",
            cfg.scenario.kind,
            kind
        );
    }
    if let Some(seed) = run.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(t) = run.max_time {
        cfg.time.max_time = t;
    }
    swarm_relloc::config::validate(&cfg)?;
    Ok(cfg)
}

fn out_dir(run: &RunArgs, cfg: &ScenarioConfig) -> PathBuf {
    if let Some(p) = &run.out {
        return p.clone();
    }
    if !cfg.output.dir.is_empty() {
        return PathBuf::from(&cfg.output.dir);
    }
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn field_for(cfg: &ScenarioConfig) -> Result<Option<ShapeField>> {
    Ok(match cfg.scenario.kind {
        ScenarioKind::Shape => Some(load_field(cfg)?),
        _ => None,
    })
}

fn render_dir(dir: &Path, cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let text = fs::read_to_string(dir.join("trace.csv"))?;
    let rows = parse_trace(&text)?;
    let origin = seed_origin(&rows).unwrap_or(cfg.init.seed_position);
    fs::write(out, render_svg(&rows, field_for(cfg)?.as_ref(), origin))?;
    Ok(())
}

fn run_one(run: &RunArgs, cfg: ScenarioConfig) -> Result<()> {
    let dir = out_dir(run, &cfg);
    let summary = run_to_dir(&cfg, &dir)?;
    render_dir(&dir, &cfg, &dir.join("trajectories.svg"))?;
    print_summary(&summary);
    println!("outputs written to {}", dir.display());
    Ok(())
}

fn print_summary(s: &RunSummary) {
    let m = &s.metrics;
    println!(
        "{:?} n={} seed={} stopped ({:?}) at t={:.2} s after {:.2} s wall",
        s.kind, s.n, s.seed, s.stop_reason, s.t_end, s.wall_time_s
    );
    println!(
        "localized pairs {}/{}, max pair error {:.4} m, max agreement error {:.4} m, max tracking error {:.4} m",
        s.localized_pairs, s.total_pairs, m.max_pair_error, m.max_agree_error, m.max_tracking_error
    );
    if s.kind == ScenarioKind::Shape {
        println!(
            "coverage {:.3}, entering {:.3}, uniformity {:.3} m, min pair distance {:.3} m",
            m.coverage, m.entering, m.uniformity, m.min_pair_distance
        );
    }
}

#[derive(Serialize)]
struct Stat {
    min: f64,
    mean: f64,
    max: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Stat {
        Stat {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Serialize)]
struct Aggregate {
    runs: usize,
    coverage: Stat,
    entering: Stat,
    uniformity: Stat,
}

fn stat_batch(run: &RunArgs, runs: u64) -> Result<()> {
    let kind = match &run.config {
        Some(path) => parse_config(path)?.scenario.kind,
        None => ScenarioKind::Shape,
    };
    let base = load(run, kind, || presets::shape("dart", 50))?;
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let dir = out_dir(run, &base);
    fs::create_dir_all(&dir)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(runs as usize);
    let seeds: Vec<u64> = (0..runs).map(|k| base.scenario.seed + k).collect();
    let mut results: Vec<Option<swarm_relloc::Result<RunSummary>>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = results.chunks_mut(seeds.len().div_ceil(workers)).enumerate().collect();
        let per = seeds.len().div_ceil(workers);
        for (w, chunk) in chunks {
            let base = &base;
            let seeds = &seeds;
            let dir = &dir;
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let seed = seeds[w * per + k];
                    *slot = Some(batch_run(base, seed, dir));
                }
            });
        }
    });
    let mut summaries = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        let s = r.expect("every slot is filled").with_context(|| format!("run with seed {seed}"))?;
        println!(
            "seed {seed}: coverage {:.3} entering {:.3} uniformity {:.3} ({:?} at {:.1} s)",
            s.metrics.coverage, s.metrics.entering, s.metrics.uniformity, s.stop_reason, s.t_end
        );
        summaries.push(s);
    }
    let pick = |f: fn(&RunSummary) -> f64| -> Vec<f64> { summaries.iter().map(f).collect() };
    let agg = Aggregate {
        runs: summaries.len(),
        coverage: Stat::of(&pick(|s| s.metrics.coverage)),
        entering: Stat::of(&pick(|s| s.metrics.entering)),
        uniformity: Stat::of(&pick(|s| s.metrics.uniformity)),
    };
    let json = serde_json::to_string_pretty(&agg)? + "\n";
    fs::write(dir.join("aggregate.json"), &json)?;
    print!("{json}");
    Ok(())
}

fn batch_run(base: &ScenarioConfig, seed: u64, dir: &Path) -> swarm_relloc::Result<RunSummary> {
    let mut cfg = base.clone();
    cfg.scenario.seed = seed;
    let run_dir = dir.join(format!("run-{seed:04}"));
    fs::create_dir_all(&run_dir)?;
    fs::write(run_dir.join("config.cfg"), serialize_config(&cfg))?;
    let start = std::time::Instant::now();
    let mut sim = Simulation::new(cfg)?;
    let mut summary = sim.run(&mut swarm_relloc::sim::NullSink)?;
    summary.wall_time_s = start.elapsed().as_secs_f64();
    let mut metrics = String::from(swarm_relloc::sim::METRICS_HEADER);
    metrics.push('\n');
    for row in &sim.metrics {
        metrics.push_str(&row.to_csv());
        metrics.push('\n');
    }
    fs::write(run_dir.join("metrics.csv"), metrics)?;
    fs::write(run_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

fn render(trace: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let dir = trace.parent().unwrap_or(Path::new("."));
    let cfg_path = config.map(Path::to_path_buf).unwrap_or_else(|| dir.join("config.cfg"));
    let field = if cfg_path.exists() {
        field_for(&parse_config(&cfg_path)?)?
    } else if config.is_some() {
        bail!("{} does not exist", cfg_path.display());
    } else {
        None
    };
    let text = fs::read_to_string(trace).with_context(|| format!("reading {}", trace.display()))?;
    let rows = parse_trace(&text)?;
    let origin = seed_origin(&rows).unwrap_or_default();
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("trajectories.svg"));
    fs::write(&out, render_svg(&rows, field.as_ref(), origin))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Docking { run, noisy } => {
            let cfg = load(&run, ScenarioKind::Docking, || presets::docking(noisy))?;
            run_one(&run, cfg)?;
        }
        Command::Formation { run, estimator, noisy } => {
            let kind = match estimator {
                Estimator::Cl => EstimatorKind::Cl,
                Estimator::Pe => EstimatorKind::Pe,
            };
            let cfg = load(&run, ScenarioKind::Formation, || presets::formation(kind, noisy))?;
            run_one(&run, cfg)?;
        }
        Command::Shape { run, shape, n } => {
            let cfg = load(&run, ScenarioKind::Shape, || presets::shape(&shape, n))?;
            run_one(&run, cfg)?;
        }
        Command::CheckTheorems { seed } => {
            let lines = checks::all(seed);
            for l in &lines {
                println!("{l}");
            }
            let failed = lines.iter().filter(|l| !l.passed).count();
            println!("{} of {} checks passed", lines.len() - failed, lines.len());
            return Ok(failed == 0);
        }
        Command::StatBatch { run, runs } => stat_batch(&run, runs)?,
        Command::Render { trace, config, out } => render(&trace, config.as_deref(), out.as_deref())?,
        Command::ShowConfig { preset } => {
            let cfg = presets::preset(&preset).expect("validated by clap");
            print!("{}", serialize_config(&cfg));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
