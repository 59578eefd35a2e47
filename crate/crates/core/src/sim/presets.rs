//! Ready-made scenarios: docking, small formations and shape assembly.

use crate::config::{EstimatorKind, InitRegion, ScenarioConfig, ScenarioKind};
use crate::geom::Vec2;

/// Two robots: a static landmark (robot 0) and a docking robot that should
/// settle at `(0.5, −0.5)` relative to it.
pub fn docking(noisy: bool) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(ScenarioKind::Docking);
    c.scenario.n = 2;
    c.time.dt = 0.1;
    c.time.max_time = if noisy { 2000.0 } else { 600.0 };
    c.time.v_stop = 1e-4;
    c.localization.h = 20;
    c.localization.h_cap = 2.0;
    c.localization.lambda0 = 0.2;
    c.localization.min_samples = if noisy { 300 } else { 0 };
    c.control.v_max = 0.1;
    c.control.kappa = 0.02;
    c.control.w0 = 0.32;
    c.control.w_r = 0.05;
    c.radii.r_i = 0.5;
    c.radii.r_sense = 7.0;
    c.radii.r_neigh = 5.0;
    c.radii.r_avoid = 0.3;
    c.init.positions = vec![Vec2::ZERO, Vec2::new(-1.5, 1.2)];
    c.init.targets = vec![Vec2::new(0.5, -0.5)];
    if noisy {
        c.noise.distance_sigma = 0.1;
        c.noise.odometry_sigma = 0.002;
    }
    c
}

/// Five robots on a fixed graph tracking a formation around the seed at
/// `(0, 7)`.
pub fn formation(estimator: EstimatorKind, noisy: bool) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(ScenarioKind::Formation);
    c.scenario.n = 5;
    c.time.max_time = 400.0;
    c.time.v_stop = 1e-5;
    c.localization.estimator = estimator;
    c.localization.h = 60;
    c.localization.h_cap = 0.6;
    c.control.kappa = 0.02;
    c.agreement.c1 = 0.5;
    c.control.excitation = if estimator == EstimatorKind::Pe { 0.3 } else { 0.0 };
    c.init.seed_position = Vec2::new(0.0, 7.0);
    c.init.radius = 3.0;
    c.init.targets = vec![
        Vec2::new(-7.0, -7.0),
        Vec2::new(0.0, -7.0),
        Vec2::new(0.0, -14.0),
        Vec2::new(7.0, -7.0),
    ];
    c.init.topology = vec![(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)];
    if noisy {
        c.noise.distance_sigma = 0.02;
        c.noise.odometry_sigma = 0.002;
        c.localization.min_samples = 100;
    }
    c
}

/// Shape formation with `n` robots on a built-in grid.
pub fn shape(builtin: &str, n: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(ScenarioKind::Shape);
    c.scenario.n = n;
    c.shape.source = format!("builtin:{builtin}");
    c.init.region = InitRegion::Lattice;
    c.init.min_spacing = 1.75;
    c.init.jitter = 0.05;
    c.localization.min_samples = 10;
    c
}

/// Looks a preset up by name.
pub fn preset(name: &str) -> Option<ScenarioConfig> {
    Some(match name {
        "docking" => docking(false),
        "docking-noisy" => docking(true),
        "formation" => formation(EstimatorKind::Cl, false),
        "formation-pe" => formation(EstimatorKind::Pe, false),
        "formation-noisy" => formation(EstimatorKind::Cl, true),
        "formation-pe-noisy" => formation(EstimatorKind::Pe, true),
        "dart" => shape("dart", 50),
        "letter-r" => shape("letter-r", 50),
        _ => return None,
    })
}

pub const PRESETS: &[&str] = &[
    "docking",
    "docking-noisy",
    "formation",
    "formation-pe",
    "formation-noisy",
    "formation-pe-noisy",
    "dart",
    "letter-r",
];
