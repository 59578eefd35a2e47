//! Scenario configuration files.
//!
//! The format is line based:
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Every key belongs to a section. Unknown keys and duplicates are errors.
//! `scenario.kind` is required; every other key falls back to its default.
//! Vectors are written `x, y`, lists of vectors `x, y; x, y`, and edge lists
//! `0-1, 1-2`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigIssue, Error, Result};
use crate::geom::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Docking,
    Formation,
    Shape,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Docking => "docking",
            ScenarioKind::Formation => "formation",
            ScenarioKind::Shape => "shape",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "docking" => Ok(ScenarioKind::Docking),
            "formation" => Ok(ScenarioKind::Formation),
            "shape" => Ok(ScenarioKind::Shape),
            _ => Err("expected one of docking, formation, shape".into()),
        }
    }
}

/// Which pair estimator drives relative localization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Concurrent learning over a stored batch.
    Cl,
    /// Memoryless gradient on the current sample.
    Pe,
}

impl FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cl" => Ok(EstimatorKind::Cl),
            "pe" => Ok(EstimatorKind::Pe),
            _ => Err("expected cl or pe".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitRegion {
    Disk,
    Rect,
    /// Square lattice of pitch `min_spacing` around the seed, nearest sites
    /// first, each site displaced by up to `jitter · pitch` per axis.
    Lattice,
}

impl FromStr for InitRegion {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "disk" => Ok(InitRegion::Disk),
            "rect" => Ok(InitRegion::Rect),
            "lattice" => Ok(InitRegion::Lattice),
            _ => Err("expected disk, rect or lattice".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    /// Robot count including the seed.
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub dt: f64,
    pub max_time: f64,
    pub v_stop: f64,
    pub t_hold: f64,
    /// Write one trace row every this many steps.
    pub trace_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSection {
    pub estimator: EstimatorKind,
    /// Fallback collection interval in steps.
    pub h: usize,
    /// Longest collection interval, seconds, searched for an exact schedule.
    pub h_cap: f64,
    pub lambda0: f64,
    /// Batch size; 0 uses `i·j·ς₀`.
    pub batch_capacity: usize,
    /// Upper bound on any batch size.
    pub max_batch: usize,
    /// Samples required before a pair may be declared localized.
    pub min_samples: usize,
    pub pe_gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementSection {
    pub c1: f64,
    pub alpha: f64,
    pub delta_t: f64,
    pub delta0: f64,
    /// Estimator accuracy used by the bound calculator only.
    pub epsilon: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiiSection {
    pub r_sense: f64,
    pub r_neigh: f64,
    pub r_avoid: f64,
    /// Desired radius of the enhancement circle.
    pub r_i: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSection {
    pub v_max: f64,
    pub w0: f64,
    pub w_r: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    /// Proportional gain for docking and offset formation.
    pub kappa: f64,
    pub mu_max: f64,
    /// Amplitude (m/s) of the persistent excitation added to the PE baseline.
    pub excitation: f64,
    /// Distance at which the exploration weight falls to zero.
    pub explore_reach: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    pub distance_sigma: f64,
    pub odometry_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSection {
    /// `builtin:dart`, `builtin:letter-r`, or a path to an ASCII/PGM grid.
    pub source: String,
    pub levels: u32,
    /// `centroid` or `col, row`.
    pub anchor: String,
    /// Cell side in meters; 0 derives it from the robot count.
    pub l_cell: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSection {
    pub region: InitRegion,
    pub radius: f64,
    pub width: f64,
    pub height: f64,
    pub min_spacing: f64,
    pub jitter: f64,
    pub seed_position: Vec2,
    /// Explicit start positions, seed first; overrides random placement.
    pub positions: Vec<Vec2>,
    /// Offsets relative to the seed for robots `1..n` (docking/formation).
    pub targets: Vec<Vec2>,
    /// Fixed interaction edges; empty means range-based topology.
    pub topology: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    /// Empty means `$SWARM_RELLOC_OUT`, then `out`.
    pub dir: String,
    pub pair_trace: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub time: TimeSection,
    pub localization: LocalizationSection,
    pub agreement: AgreementSection,
    pub radii: RadiiSection,
    pub control: ControlSection,
    pub noise: NoiseSection,
    pub shape: ShapeSection,
    pub init: InitSection,
    pub output: OutputSection,
}

impl ScenarioConfig {
    /// Defaults for the given kind: the 50-robot shape-formation parameters.
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioConfig {
            scenario: ScenarioSection { kind, n: 50, seed: 0 },
            time: TimeSection {
                dt: 0.01,
                max_time: 150.0,
                v_stop: 1e-3,
                t_hold: 2.0,
                trace_every: 1,
            },
            localization: LocalizationSection {
                estimator: EstimatorKind::Cl,
                h: 20,
                h_cap: 0.2,
                lambda0: 0.1,
                batch_capacity: 0,
                max_batch: 4096,
                min_samples: 0,
                pe_gain: 5.0,
            },
            agreement: AgreementSection {
                c1: 0.1,
                alpha: 0.5,
                delta_t: 1.0,
                delta0: 0.01,
                epsilon: 0.01,
                gamma: 0.5,
            },
            radii: RadiiSection {
                r_sense: 4.0,
                r_neigh: 2.5,
                r_avoid: 1.8,
                r_i: 0.3,
            },
            control: ControlSection {
                v_max: 1.0,
                w0: 6.0,
                w_r: 4.0,
                kappa1: 10.0,
                kappa2: 15.0,
                kappa3: 25.0,
                kappa4: 2.0,
                kappa: 0.02,
                mu_max: 1e3,
                excitation: 0.0,
                explore_reach: 1.0,
            },
            noise: NoiseSection {
                distance_sigma: 0.0,
                odometry_sigma: 0.0,
            },
            shape: ShapeSection {
                source: "builtin:dart".into(),
                levels: 3,
                anchor: "centroid".into(),
                l_cell: 0.0,
            },
            init: InitSection {
                region: InitRegion::Disk,
                radius: 8.0,
                width: 16.0,
                height: 16.0,
                min_spacing: 1.6,
                jitter: 0.05,
                seed_position: Vec2::ZERO,
                positions: Vec::new(),
                targets: Vec::new(),
                topology: Vec::new(),
            },
            output: OutputSection {
                dir: String::new(),
                pair_trace: true,
            },
        }
    }
}

/// Text form of one config value.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty => $what:literal),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|_| format!("expected {}", $what))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_value!(u32 => "an unsigned integer", u64 => "an unsigned integer", usize => "an unsigned integer", bool => "true or false");

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|_| "expected a number".to_string())
    }
    fn render(&self) -> String {
        // Display is shortest-roundtrip for f64
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for ScenarioKind {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
    }
    fn render(&self) -> String {
        self.as_str().into()
    }
}

impl ConfigValue for EstimatorKind {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
    }
    fn render(&self) -> String {
        match self {
            EstimatorKind::Cl => "cl",
            EstimatorKind::Pe => "pe",
        }
        .into()
    }
}

impl ConfigValue for InitRegion {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse()
    }
    fn render(&self) -> String {
        match self {
            InitRegion::Disk => "disk",
            InitRegion::Rect => "rect",
            InitRegion::Lattice => "lattice",
        }
        .into()
    }
}

impl ConfigValue for Vec2 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let mut parts = s.split(',').map(str::trim);
        let (Some(x), Some(y), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err("expected `x, y`".into());
        };
        Ok(Vec2::new(f64::parse_value(x)?, f64::parse_value(y)?))
    }
    fn render(&self) -> String {
        format!("{}, {}", self.x.render(), self.y.render())
    }
}

impl ConfigValue for Vec<Vec2> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.split(';')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(Vec2::parse_value)
            .collect()
    }
    fn render(&self) -> String {
        self.iter().map(Vec2::render).collect::<Vec<_>>().join("; ")
    }
}

impl ConfigValue for Vec<(usize, usize)> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                let (a, b) = p.split_once('-').ok_or("expected edges like `0-1, 1-2`")?;
                let a = usize::parse_value(a.trim())?;
                let b = usize::parse_value(b.trim())?;
                Ok((a, b))
            })
            .collect()
    }
    fn render(&self) -> String {
        self.iter().map(|(a, b)| format!("{a}-{b}")).collect::<Vec<_>>().join(", ")
    }
}

macro_rules! config_fields {
    ($($sec:ident . $key:ident),* $(,)?) => {
        /// Every accepted `section.key`, in file order.
        pub const KEYS: &[(&str, &str)] = &[$((stringify!($sec), stringify!($key))),*];

        fn set_field(cfg: &mut ScenarioConfig, sec: &str, key: &str, value: &str) -> Option<std::result::Result<(), String>> {
            $(
                if sec == stringify!($sec) && key == stringify!($key) {
                    return Some(ConfigValue::parse_value(value).map(|v| cfg.$sec.$key = v));
                }
            )*
            None
        }

        fn render_field(cfg: &ScenarioConfig, sec: &str, key: &str) -> String {
            $(
                if sec == stringify!($sec) && key == stringify!($key) {
                    return cfg.$sec.$key.render();
                }
            )*
            unreachable!("unknown key {sec}.{key}")
        }
    };
}

config_fields!(
    scenario.kind,
    scenario.n,
    scenario.seed,
    time.dt,
    time.max_time,
    time.v_stop,
    time.t_hold,
    time.trace_every,
    localization.estimator,
    localization.h,
    localization.h_cap,
    localization.lambda0,
    localization.batch_capacity,
    localization.max_batch,
    localization.min_samples,
    localization.pe_gain,
    agreement.c1,
    agreement.alpha,
    agreement.delta_t,
    agreement.delta0,
    agreement.epsilon,
    agreement.gamma,
    radii.r_sense,
    radii.r_neigh,
    radii.r_avoid,
    radii.r_i,
    control.v_max,
    control.w0,
    control.w_r,
    control.kappa1,
    control.kappa2,
    control.kappa3,
    control.kappa4,
    control.kappa,
    control.mu_max,
    control.excitation,
    control.explore_reach,
    noise.distance_sigma,
    noise.odometry_sigma,
    shape.source,
    shape.levels,
    shape.anchor,
    shape.l_cell,
    init.region,
    init.radius,
    init.width,
    init.height,
    init.min_spacing,
    init.jitter,
    init.seed_position,
    init.positions,
    init.targets,
    init.topology,
    output.dir,
    output.pair_trace,
);

fn issue(field: &str, rule: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        field: field.into(),
        rule: rule.into(),
    }
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Shape);
    let mut issues = Vec::new();
    let mut seen: Vec<(String, String)> = Vec::new();
    let mut section: Option<String> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let at = format!("line {}", k + 1);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if KEYS.iter().any(|(s, _)| *s == name.trim()) => {
                    section = Some(name.trim().to_string());
                }
                Some(name) => issues.push(issue(name.trim(), format!("unknown section ({at})"))),
                None => issues.push(issue(&at, "unterminated section header")),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(issue(&at, "expected `key = value`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section.as_deref() else {
            issues.push(issue(key, format!("key outside any section ({at})")));
            continue;
        };
        let field = format!("{sec}.{key}");
        if seen.iter().any(|(s, k)| s == sec && k == key) {
            issues.push(issue(&field, format!("duplicate key ({at})")));
            continue;
        }
        match set_field(&mut cfg, sec, key, value) {
            None => issues.push(issue(&field, format!("unknown key ({at})"))),
            Some(Err(rule)) => issues.push(issue(&field, rule)),
            Some(Ok(())) => seen.push((sec.to_string(), key.to_string())),
        }
    }
    if !seen.iter().any(|(s, k)| s == "scenario" && k == "kind") {
        issues.push(issue("scenario.kind", "missing required key"));
    }
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

/// Writes every key; the output parses back to an equal config.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    let mut current = "";
    for &(sec, key) in KEYS {
        if sec != current {
            if !current.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{sec}]");
            current = sec;
        }
        let _ = writeln!(out, "{key} = {}", render_field(cfg, sec, key));
    }
    out
}

/// Every violated rule, named by field.
pub fn check(cfg: &ScenarioConfig) -> Vec<ConfigIssue> {
    let mut out = Vec::new();
    let mut positive = |field: &str, v: f64| {
        if !(v > 0.0 && v.is_finite()) {
            out.push(issue(field, "must be a finite number > 0"));
        }
    };
    positive("time.dt", cfg.time.dt);
    positive("time.max_time", cfg.time.max_time);
    positive("time.v_stop", cfg.time.v_stop);
    positive("localization.h_cap", cfg.localization.h_cap);
    positive("localization.pe_gain", cfg.localization.pe_gain);
    positive("agreement.c1", cfg.agreement.c1);
    positive("agreement.delta_t", cfg.agreement.delta_t);
    positive("agreement.delta0", cfg.agreement.delta0);
    positive("agreement.epsilon", cfg.agreement.epsilon);
    positive("radii.r_sense", cfg.radii.r_sense);
    positive("radii.r_neigh", cfg.radii.r_neigh);
    positive("radii.r_avoid", cfg.radii.r_avoid);
    positive("radii.r_i", cfg.radii.r_i);
    positive("control.v_max", cfg.control.v_max);
    positive("control.w0", cfg.control.w0);
    positive("control.w_r", cfg.control.w_r);
    positive("control.kappa1", cfg.control.kappa1);
    positive("control.kappa2", cfg.control.kappa2);
    positive("control.kappa3", cfg.control.kappa3);
    positive("control.kappa4", cfg.control.kappa4);
    positive("control.kappa", cfg.control.kappa);
    positive("control.mu_max", cfg.control.mu_max);
    positive("control.explore_reach", cfg.control.explore_reach);
    positive("init.radius", cfg.init.radius);
    positive("init.width", cfg.init.width);
    positive("init.height", cfg.init.height);

    let mut nonneg = |field: &str, v: f64| {
        if !(v >= 0.0 && v.is_finite()) {
            out.push(issue(field, "must be a finite number ≥ 0"));
        }
    };
    nonneg("time.t_hold", cfg.time.t_hold);
    nonneg("noise.distance_sigma", cfg.noise.distance_sigma);
    nonneg("noise.odometry_sigma", cfg.noise.odometry_sigma);
    nonneg("control.excitation", cfg.control.excitation);
    nonneg("shape.l_cell", cfg.shape.l_cell);
    nonneg("init.min_spacing", cfg.init.min_spacing);
    nonneg("init.jitter", cfg.init.jitter);

    if cfg.scenario.n == 0 {
        out.push(issue("scenario.n", "must be ≥ 1 (the seed counts)"));
    }
    if cfg.time.trace_every == 0 {
        out.push(issue("time.trace_every", "must be ≥ 1"));
    }
    if cfg.localization.h == 0 {
        out.push(issue("localization.h", "must be ≥ 1"));
    }
    if cfg.localization.max_batch < 2 {
        out.push(issue("localization.max_batch", "must be ≥ 2"));
    }
    if cfg.localization.min_samples > cfg.localization.max_batch {
        out.push(issue("localization.min_samples", "must not exceed localization.max_batch"));
    }
    if !(0.0..1.0).contains(&cfg.localization.lambda0) {
        out.push(issue("localization.lambda0", "must satisfy 0 ≤ λ₀ < 1"));
    }
    if !(cfg.agreement.alpha > 0.0 && cfg.agreement.alpha < 1.0) {
        out.push(issue("agreement.alpha", "0<α<1"));
    }
    if !(cfg.agreement.gamma > 0.0 && cfg.agreement.gamma < 1.0) {
        out.push(issue("agreement.gamma", "0<γ<1"));
    }
    if cfg.shape.levels == 0 {
        out.push(issue("shape.levels", "must be ≥ 1"));
    }
    if cfg.shape.anchor != "centroid" && Vec2::parse_value(&cfg.shape.anchor).is_err() {
        out.push(issue("shape.anchor", "expected `centroid` or `col, row`"));
    }
    if cfg.radii.r_neigh >= cfg.radii.r_sense {
        out.push(issue(
            "radii.r_neigh",
            "must be < radii.r_sense (neighbor rule precondition r_neigh < r_sense)",
        ));
    } else if cfg.radii.r_neigh >= cfg.radii.r_sense - 2.0 * cfg.radii.r_i {
        out.push(issue(
            "radii.r_neigh",
            "must be < r_sense − r_i − r_j so circling neighbors stay in range",
        ));
    }
    if !cfg.init.seed_position.is_finite() {
        out.push(issue("init.seed_position", "must be finite"));
    }
    if !cfg.init.positions.is_empty() && cfg.init.positions.len() != cfg.scenario.n {
        out.push(issue("init.positions", "must list exactly scenario.n positions (seed first)"));
    }
    if cfg.init.positions.iter().chain(&cfg.init.targets).any(|p| !p.is_finite()) {
        out.push(issue("init", "positions and targets must be finite"));
    }
    let n = cfg.scenario.n;
    if cfg.init.topology.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
        out.push(issue("init.topology", "edges must join two distinct ids below scenario.n"));
    }
    match cfg.scenario.kind {
        ScenarioKind::Docking | ScenarioKind::Formation => {
            if cfg.init.targets.len() + 1 != n {
                out.push(issue("init.targets", "must list one offset per non-seed robot"));
            }
        }
        ScenarioKind::Shape => {
            if cfg.shape.source.is_empty() {
                out.push(issue("shape.source", "must name a grid"));
            }
        }
    }
    out
}

pub fn validate(cfg: &ScenarioConfig) -> Result<()> {
    let issues = check(cfg);
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(issues))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const REFERENCE_FILE: &str = "\
# 50 robots forming a dart
[scenario]
kind = shape
n = 50
seed = 1

[time]
dt = 0.01

[localization]
h = 20
lambda0 = 0.1

[agreement]
c1 = 0.1
alpha = 0.5
delta_t = 1
delta0 = 0.01

[radii]
r_sense = 4
r_neigh = 2.5
r_avoid = 1.8
r_i = 0.3

[control]
v_max = 1
w0 = 6
w_r = 4
kappa1 = 10
kappa2 = 15
kappa3 = 25
kappa4 = 2
";

    fn issues_of(text: &str) -> Vec<ConfigIssue> {
        match parse_config_str(text) {
            Err(Error::Config(i)) => i,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn reference_parameters_accepted() {
        let cfg = parse_config_str(REFERENCE_FILE).unwrap();
        assert_eq!(cfg.scenario.n, 50);
        assert_eq!(cfg.radii.r_avoid, 1.8);
        assert_eq!(cfg, {
            let mut c = ScenarioConfig::new(ScenarioKind::Shape);
            c.scenario.seed = 1;
            c
        });
    }

    #[test]
    fn neighbor_radius_must_be_inside_sensing() {
        let text = REFERENCE_FILE.replace("r_neigh = 2.5", "r_neigh = 4");
        let issues = issues_of(&text);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "radii.r_neigh");
        assert!(issues[0].rule.contains("r_neigh < r_sense"));
    }

    #[test]
    fn circling_margin_is_checked() {
        let text = REFERENCE_FILE.replace("r_i = 0.3", "r_i = 0.9");
        let issues = issues_of(&text);
        assert_eq!(issues[0].field, "radii.r_neigh");
        assert!(issues[0].rule.contains("r_sense − r_i − r_j"));
    }

    #[test]
    fn alpha_out_of_range() {
        let issues = issues_of(&REFERENCE_FILE.replace("alpha = 0.5", "alpha = 1.5"));
        assert_eq!(issues[0].field, "agreement.alpha");
        assert_eq!(issues[0].rule, "0<α<1");
    }

    #[test]
    fn unknown_duplicate_and_missing_keys() {
        let issues = issues_of("[scenario]\nn = 3\nn = 4\nbogus = 1\n[nowhere]\n");
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        assert!(fields.contains(&"scenario.n"));
        assert!(fields.contains(&"scenario.bogus"));
        assert!(fields.contains(&"nowhere"));
        assert!(fields.contains(&"scenario.kind"));
    }

    #[test]
    fn bad_values_name_the_field() {
        let issues = issues_of("[scenario]\nkind = blob\n[time]\ndt = fast\n");
        assert_eq!(issues[0].field, "scenario.kind");
        assert_eq!(issues[1].field, "time.dt");
        let msg = Error::Config(issues).to_string();
        assert!(msg.contains("time.dt: expected a number"), "{msg}");
    }

    #[test]
    fn formation_needs_targets() {
        let issues = issues_of("[scenario]\nkind = formation\nn = 3\n[init]\ntargets = 1, 2\n");
        assert_eq!(issues[0].field, "init.targets");
        let ok = parse_config_str("[scenario]\nkind = formation\nn = 3\n[init]\ntargets = 1, 2; 3, 4\ntopology = 0-1, 1-2\n")
            .unwrap();
        assert_eq!(ok.init.targets, vec![Vec2::new(1.0, 2.0), Vec2::new(3.0, 4.0)]);
        assert_eq!(ok.init.topology, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn serialize_roundtrip_defaults() {
        for kind in [ScenarioKind::Shape, ScenarioKind::Docking, ScenarioKind::Formation] {
            let mut cfg = ScenarioConfig::new(kind);
            if kind != ScenarioKind::Shape {
                cfg.scenario.n = 2;
                cfg.init.targets = vec![Vec2::new(0.5, -0.5)];
            }
            let text = serialize_config(&cfg);
            assert_eq!(parse_config_str(&text).unwrap(), cfg);
        }
    }

    proptest! {
        #[test]
        fn serialize_roundtrip_random(
            seed in any::<u64>(),
            dt in 1e-4f64..1.0,
            r_sense in 3.0f64..10.0,
            frac in 0.1f64..0.6,
            c1 in 1e-3f64..10.0,
            alpha in 0.01f64..0.99,
            sigma in 0.0f64..1.0,
            targets in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..5),
            dir in "[a-z0-9_/]{0,12}",
        ) {
            let mut cfg = ScenarioConfig::new(ScenarioKind::Formation);
            cfg.scenario.seed = seed;
            cfg.scenario.n = targets.len() + 1;
            cfg.time.dt = dt;
            cfg.radii.r_sense = r_sense;
            cfg.radii.r_neigh = r_sense * frac;
            cfg.agreement.c1 = c1;
            cfg.agreement.alpha = alpha;
            cfg.noise.distance_sigma = sigma;
            cfg.init.targets = targets.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            cfg.init.topology = (1..cfg.scenario.n).map(|i| (i - 1, i)).collect();
            cfg.output.dir = dir;
            let back = parse_config_str(&serialize_config(&cfg)).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
