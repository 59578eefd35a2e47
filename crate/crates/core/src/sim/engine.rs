//! Discrete-time swarm simulation.
//!
//! Each step runs, in order: topology refresh, range measurements and pair
//! estimator updates, one synchronous agreement round, command selection,
//! trace output, and finally odometry plus integration. All randomness comes
//! from per-robot or per-pair streams, so a run is a pure function of its
//! configuration.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agreement::{
    agreement_step, hop_update, lyapunov, agreement_time_bounds, update_rate, AgreementBounds, AgreementState,
    BoundInputs, EdgeBoundInput, NeighborInput,
};
use crate::behavior::{
    cmd_enhance, cmd_enter, cmd_explore, control_step, neighbor_set, repulsion, saturate, solve_alignment, Commands,
    Enhancer, InteractNeighbor, NeighborHistory, Phase,
};
use crate::config::{EstimatorKind, InitRegion, ScenarioConfig, ScenarioKind};
use crate::error::{ConfigIssue, Error, Result};
use crate::geom::Vec2;
use crate::relloc::{
    baseline_pe_update, enhancement_velocity, predicted_rate, schedule_collection, CollectionSchedule,
    MeasurementBatch, PairSample, RelPosEstimator,
};
use crate::rng::{split_rng, Stream};
use crate::shape::{builtin, cell_size, gray_transform, load_shape, padding, ShapeField};
use crate::swarm::{
    laplacian_plus_b, lambda_min_sym, noisy_displacement, noisy_range, InteractionGraph, Mode, RobotState, SEED_ID,
};

use super::metrics::{min_pair_distance, shape_metrics, MetricsRow};
use super::trace::{PairRow, TraceRow, TraceSink};

/// Knobs that are not part of the scenario file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineOptions {
    /// Stop as soon as every robot has left the agreement phase.
    pub stop_when_agreed: bool,
    /// Record a metrics row every this many steps (0: every 0.1 s).
    pub metrics_stride: usize,
    /// Evaluate the agreement error bound at the end of the run.
    pub compute_bounds: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            stop_when_agreed: false,
            metrics_stride: 0,
            compute_bounds: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTime,
    Static,
    Agreed,
}

#[derive(Clone, Copy, Debug)]
struct Anchor {
    d: f64,
    z: Vec2,
    steps: usize,
}

/// Shared estimator for an unordered pair `i < j`; it tracks `p_i − p_j`.
#[derive(Clone, Debug)]
pub struct PairLink {
    pub i: usize,
    pub j: usize,
    pub est: RelPosEstimator,
    pub schedule: CollectionSchedule,
    /// `z_i − z_j` when the pair first met; relative displacement is counted
    /// from there, so `est.p0_hat` refers to that instant.
    pub z_ref: Vec2,
    pub met_at_step: u64,
    pub localized: bool,
    pub localized_at: Option<f64>,
    /// Most recent range measurement.
    pub last_distance: f64,
    prev: Option<(f64, Vec2)>,
    anchor: Option<Anchor>,
    samples_taken: usize,
    rng: Stream,
}

impl PairLink {
    /// Real-time estimate of `p_a − p_b` for either orientation.
    pub fn estimate_from(&self, a: usize) -> Vec2 {
        if a == self.i {
            self.est.estimate()
        } else {
            -self.est.estimate()
        }
    }

    /// Estimate of `p_a − p_b` at the instant the pair met.
    pub fn reference_from(&self, a: usize) -> Vec2 {
        if a == self.i {
            self.est.p0_hat
        } else {
            -self.est.p0_hat
        }
    }
}

/// Final summary of a run, serialized to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: ScenarioKind,
    pub n: usize,
    pub seed: u64,
    pub steps: u64,
    pub t_end: f64,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
    pub metrics: MetricsRow,
    pub localized_pairs: usize,
    pub total_pairs: usize,
    pub inexact_schedules: usize,
    /// Time at which every robot had left the agreement phase.
    pub agreed_at: Option<f64>,
    pub bounds: Option<AgreementBounds>,
}

pub struct Simulation {
    pub cfg: ScenarioConfig,
    pub options: EngineOptions,
    pub robots: Vec<RobotState>,
    pub field: Option<ShapeField>,
    pub links: BTreeMap<(usize, usize), PairLink>,
    /// Neighbor graph at the first step.
    pub initial_graph: InteractionGraph,
    pub agree: Vec<AgreementState>,
    pub metrics: Vec<MetricsRow>,
    /// Seed position at the first step; the frame of every `q̂`.
    pub origin: Vec2,
    initial_positions: Vec<Vec2>,
    fixed: Option<InteractionGraph>,
    history: NeighborHistory,
    neighbors: Vec<Vec<usize>>,
    initial_neighbors: Vec<Vec<usize>>,
    enhancers: Vec<Enhancer>,
    /// Robots that ran the enhancement command on the previous step.
    circling: Vec<bool>,
    odo_rng: Vec<Stream>,
    enh_rng: Vec<Stream>,
    lpb: Option<DMatrix<f64>>,
    lyapunov_trace: Vec<(f64, f64)>,
    k: u64,
    still_since: Option<f64>,
    agreed_at: Option<f64>,
    stop: Option<StopReason>,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn config_error(field: &str, rule: impl Into<String>) -> Error {
    Error::Config(vec![ConfigIssue {
        field: field.into(),
        rule: rule.into(),
    }])
}

/// Loads the shape named by `shape.source`: `builtin:<name>` or a file path.
pub fn load_field(cfg: &ScenarioConfig) -> Result<ShapeField> {
    let src = cfg.shape.source.trim();
    let grid = match src.strip_prefix("builtin:") {
        Some(name) => builtin(name).ok_or_else(|| config_error("shape.source", format!("unknown builtin {name:?}")))?,
        None => load_shape(std::path::Path::new(src))?,
    };
    let mut field = gray_transform(&grid, cfg.shape.levels);
    let l = if cfg.shape.l_cell > 0.0 {
        cfg.shape.l_cell
    } else {
        cell_size(cfg.scenario.n, field.n_cell, cfg.radii.r_avoid)
    };
    field = field.with_cell_size(l);
    let anchor = cfg.shape.anchor.trim();
    if anchor != "centroid" {
        let parts: Vec<&str> = anchor.split(',').map(str::trim).collect();
        let parsed = match parts.as_slice() {
            [c, r] => c.parse::<usize>().ok().zip(r.parse::<usize>().ok()),
            _ => None,
        };
        let (c, r) = parsed.ok_or_else(|| config_error("shape.anchor", "expected \"centroid\" or \"col, row\""))?;
        // anchors refer to the unpadded image
        let [pad_c, pad_r, _, _] = padding(&grid, cfg.shape.levels);
        if c >= grid.width || r >= grid.height {
            return Err(config_error("shape.anchor", "outside the image"));
        }
        field = field.with_origin(c + pad_c, r + pad_r);
    }
    Ok(field)
}

fn sample_in_region<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Vec2 {
    let c = cfg.init.seed_position;
    match cfg.init.region {
        InitRegion::Disk => {
            let r = cfg.init.radius * rng.gen::<f64>().sqrt();
            c + Vec2::from_polar(r, rng.gen::<f64>() * std::f64::consts::TAU)
        }
        InitRegion::Rect => c + Vec2::new(
            (rng.gen::<f64>() - 0.5) * cfg.init.width,
            (rng.gen::<f64>() - 0.5) * cfg.init.height,
        ),
        InitRegion::Lattice => unreachable!("lattice sites are not sampled"),
    }
}

/// Starting positions: explicit, around targets, a jittered lattice, or
/// random with a minimum spacing and a connected neighbor graph.
pub fn initial_positions(cfg: &ScenarioConfig) -> Result<Vec<Vec2>> {
    let n = cfg.scenario.n;
    if !cfg.init.positions.is_empty() {
        return Ok(cfg.init.positions.clone());
    }
    let mut rng = split_rng(cfg.scenario.seed, SEED_ID as u64, "init");
    let seed_pos = cfg.init.seed_position;
    if !cfg.init.targets.is_empty() {
        let mut out = vec![seed_pos];
        for &t in &cfg.init.targets {
            let r = cfg.init.radius * rng.gen::<f64>().sqrt();
            out.push(seed_pos + t + Vec2::from_polar(r, rng.gen::<f64>() * std::f64::consts::TAU));
        }
        return Ok(out);
    }
    let spacing = cfg.init.min_spacing;
    if cfg.init.region == InitRegion::Lattice {
        return lattice_positions(cfg, &mut rng);
    }
    for _ in 0..200 {
        let mut pts = vec![seed_pos];
        let mut failed = false;
        while pts.len() < n {
            let mut placed = false;
            for _ in 0..2000 {
                let p = sample_in_region(cfg, &mut rng);
                if pts.iter().all(|q| q.distance(p) >= spacing) {
                    pts.push(p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                failed = true;
                break;
            }
        }
        if !failed && InteractionGraph::within_radius(&pts, cfg.radii.r_neigh * (1.0 - 1e-9)).is_connected() {
            return Ok(pts);
        }
    }
    Err(config_error(
        "init",
        "could not place robots with the requested spacing and a connected neighbor graph",
    ))
}

fn lattice_positions(cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<Vec<Vec2>> {
    let n = cfg.scenario.n;
    let pitch = cfg.init.min_spacing;
    if pitch <= 0.0 {
        return Err(config_error("init.min_spacing", "lattice placement needs a positive pitch"));
    }
    let half = ((n as f64).sqrt().ceil() as i64) / 2 + 1;
    let mut sites: Vec<(i64, i64)> = (-half..=half).flat_map(|r| (-half..=half).map(move |c| (c, r))).collect();
    // stable order: by distance from the seed, then row, then column
    sites.sort_by_key(|&(c, r)| (c * c + r * r, r, c));
    let mut out = vec![cfg.init.seed_position];
    for &(c, r) in sites.iter().skip(1).take(n.saturating_sub(1)) {
        let jx = (rng.gen::<f64>() * 2.0 - 1.0) * cfg.init.jitter * pitch;
        let jy = (rng.gen::<f64>() * 2.0 - 1.0) * cfg.init.jitter * pitch;
        out.push(cfg.init.seed_position + Vec2::new(c as f64 * pitch + jx, r as f64 * pitch + jy));
    }
    if !InteractionGraph::within_radius(&out, cfg.radii.r_neigh * (1.0 - 1e-9)).is_connected() {
        return Err(config_error("init", "lattice pitch leaves the neighbor graph disconnected"));
    }
    Ok(out)
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        Self::with_options(cfg, EngineOptions::default())
    }

    pub fn with_options(cfg: ScenarioConfig, options: EngineOptions) -> Result<Self> {
        crate::config::validate(&cfg)?;
        let positions = initial_positions(&cfg)?;
        Self::from_positions(cfg, options, positions)
    }

    /// Builds a simulation with explicit starting positions (robot 0 is the
    /// seed).
    pub fn from_positions(cfg: ScenarioConfig, options: EngineOptions, positions: Vec<Vec2>) -> Result<Self> {
        let n = positions.len();
        if n == 0 || n != cfg.scenario.n {
            return Err(config_error("scenario.n", format!("{} positions for n = {}", n, cfg.scenario.n)));
        }
        let field = match cfg.scenario.kind {
            ScenarioKind::Shape => Some(load_field(&cfg)?),
            _ => None,
        };
        let robots: Vec<RobotState> = positions.iter().enumerate().map(|(i, &p)| RobotState::new(i, p)).collect();
        let fixed = if cfg.init.topology.is_empty() {
            None
        } else {
            Some(InteractionGraph::from_edges(n, cfg.init.topology.iter().copied()))
        };
        let seed = cfg.scenario.seed;
        let mut sim = Simulation {
            options,
            robots,
            field,
            links: BTreeMap::new(),
            initial_graph: InteractionGraph::new(n),
            agree: (0..n).map(|_| AgreementState::new(Vec2::ZERO)).collect(),
            metrics: Vec::new(),
            origin: positions[SEED_ID],
            initial_positions: positions,
            fixed,
            history: NeighborHistory::new(n),
            neighbors: vec![Vec::new(); n],
            initial_neighbors: vec![Vec::new(); n],
            enhancers: vec![Enhancer::default(); n],
            circling: vec![false; n],
            odo_rng: (0..n).map(|i| split_rng(seed, i as u64, "odom")).collect(),
            enh_rng: (0..n).map(|i| split_rng(seed, i as u64, "enhance")).collect(),
            lpb: None,
            lyapunov_trace: Vec::new(),
            k: 0,
            still_since: None,
            agreed_at: None,
            stop: None,
            cfg,
        };
        sim.refresh_neighbors();
        sim.initial_neighbors = sim.neighbors.clone();
        let mut g = InteractionGraph::new(n);
        for (i, nb) in sim.neighbors.iter().enumerate() {
            for &j in nb {
                g.add_edge(i, j);
            }
        }
        sim.initial_graph = g;
        if sim.options.compute_bounds && (2..=400).contains(&n) {
            let m = laplacian_plus_b(&sim.initial_graph);
            if lambda_min_sym(&m) > 1e-9 {
                sim.lpb = Some(m);
            }
        }
        Ok(sim)
    }

    pub fn step_index(&self) -> u64 {
        self.k
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.cfg.time.dt
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn link(&self, a: usize, b: usize) -> Option<&PairLink> {
        self.links.get(&pair_key(a, b))
    }

    /// True relative position `p_i − p_0` at the first step.
    pub fn true_initial_offset(&self, i: usize) -> Vec2 {
        self.initial_positions[i] - self.origin
    }

    fn refresh_neighbors(&mut self) {
        let n = self.robots.len();
        if let Some(g) = &self.fixed {
            for i in 0..n {
                self.neighbors[i] = g.neighbors(i);
            }
            return;
        }
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let pi = self.robots[i].position;
            for (j, d) in dist.iter_mut().enumerate() {
                *d = pi.distance(self.robots[j].position);
            }
            self.neighbors[i] = neighbor_set(i, &dist, self.cfg.radii.r_sense, self.cfg.radii.r_neigh, &mut self.history);
        }
    }

    fn is_localized(&self, a: usize, b: usize) -> bool {
        self.link(a, b).is_some_and(|l| l.localized)
    }

    fn new_link(&self, i: usize, j: usize) -> PairLink {
        let loc = &self.cfg.localization;
        let schedule = schedule_collection(i, j, self.cfg.time.dt, loc.h_cap, loc.h);
        let capacity = if loc.batch_capacity > 0 {
            loc.batch_capacity
        } else {
            schedule.varsigma
        }
        .max(loc.min_samples)
        .min(loc.max_batch);
        let z_ref = self.robots[i].odometry - self.robots[j].odometry;
        PairLink {
            i,
            j,
            est: RelPosEstimator::new(Vec2::ZERO, MeasurementBatch::new(schedule.h, capacity)),
            schedule,
            z_ref,
            met_at_step: self.k,
            localized: false,
            localized_at: None,
            last_distance: self.robots[i].position.distance(self.robots[j].position),
            prev: None,
            anchor: None,
            samples_taken: 0,
            rng: split_rng(self.cfg.scenario.seed, i as u64, &format!("range-{j}")),
        }
    }

    fn advance_links(&mut self, t: f64) -> Result<()> {
        let n = self.robots.len();
        // a robot records data for every neighbor while it still circles
        let enhancing = self.circling.clone();
        let mut adj = vec![false; n * n];
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                adj[i * n + j] = true;
            }
        }
        for i in 0..n {
            for &j in &self.neighbors[i] {
                if i < j && !self.links.contains_key(&(i, j)) {
                    let link = self.new_link(i, j);
                    self.links.insert((i, j), link);
                }
            }
        }
        let loc = self.cfg.localization.clone();
        let sigma = self.cfg.noise.distance_sigma;
        let k = self.k as usize;
        for link in self.links.values_mut() {
            let (i, j) = (link.i, link.j);
            let z_rel = self.robots[i].odometry - self.robots[j].odometry - link.z_ref;
            link.est.z_rel = z_rel;
            if !(adj[i * n + j] && adj[j * n + i]) {
                // the collection clock pauses until the pair meets again
                link.prev = None;
                link.anchor = None;
                continue;
            }
            let truth = self.robots[i].position.distance(self.robots[j].position);
            let d = noisy_range(truth, sigma, &mut link.rng);
            link.last_distance = d;
            let current = link
                .prev
                .map(|(d0, z0)| PairSample::from_measurements(d0, d, z_rel - z0, z0, k));
            link.prev = Some((d, z_rel));

            let mut collected = None;
            match &mut link.anchor {
                None => {
                    link.anchor = Some(Anchor { d, z: z_rel, steps: 0 });
                }
                Some(a) => {
                    a.steps += 1;
                    if a.steps >= link.schedule.h {
                        collected = Some(PairSample::from_measurements(a.d, d, z_rel - a.z, a.z, link.samples_taken));
                        link.samples_taken += 1;
                        *a = Anchor { d, z: z_rel, steps: 0 };
                    }
                }
            }
            if let Some(s) = collected {
                if !link.localized || enhancing[i] || enhancing[j] {
                    link.est.batch.push(s);
                }
                if loc.estimator == EstimatorKind::Pe {
                    link.est.p0_hat = baseline_pe_update(link.est.p0_hat, s.u, s.y, loc.pe_gain);
                }
            }
            if loc.estimator == EstimatorKind::Cl && link.est.batch.rank() == 2 {
                link.est.update(current.as_ref())?;
            }
            if !link.localized {
                let er = link.est.batch.eigen_ratio();
                if er.defined && er.ratio > loc.lambda0 && link.est.batch.len() >= loc.min_samples.max(1) {
                    link.localized = true;
                    link.localized_at = Some(t);
                }
            }
        }
        Ok(())
    }

    fn has_unlocalized(&self, i: usize) -> bool {
        self.neighbors[i].iter().any(|&j| !self.is_localized(i, j))
    }

    fn agreement_frozen(&self, i: usize) -> bool {
        self.cfg.scenario.kind == ScenarioKind::Shape && self.robots[i].mode == Mode::Forming
    }

    fn advance_agreement(&mut self, t: f64, unloc: &[bool]) {
        let n = self.robots.len();
        let a = self.cfg.agreement.clone();
        let dt = self.cfg.time.dt;
        let q0: Vec<Vec2> = self.agree.iter().map(|s| s.q0_hat).collect();
        let hops: Vec<u32> = self.agree.iter().map(|s| s.hop).collect();
        for i in 0..n {
            let frozen = self.agreement_frozen(i);
            if i != SEED_ID && !frozen {
                let mut inputs = Vec::with_capacity(self.initial_neighbors[i].len());
                let mut anchor = None;
                for &j in &self.initial_neighbors[i] {
                    let p = self.links[&pair_key(i, j)].reference_from(i);
                    if j == SEED_ID {
                        anchor = Some(p);
                    } else {
                        inputs.push(NeighborInput {
                            q0_hat_j: q0[j],
                            p_hat_ij0: p,
                        });
                    }
                }
                let next = agreement_step(&self.agree[i], &inputs, anchor, a.c1, a.alpha, dt);
                self.agree[i].q0_hat = next.q0_hat;
            }
            self.agree[i].set_odometry(self.robots[i].odometry);
            self.agree[i].record(t, a.delta_t);
            if !frozen {
                let hop = if unloc[i] {
                    0
                } else {
                    let rate = update_rate(&self.agree[i], a.delta_t);
                    let nb: Vec<u32> = self.initial_neighbors[i].iter().map(|&j| hops[j]).collect();
                    hop_update(hops[i], &nb, rate, a.delta0)
                };
                self.agree[i].hop = hop;
            }
            self.robots[i].hop = self.agree[i].hop;
        }
        for (i, &unlocalized) in unloc.iter().enumerate() {
            let mode = match self.cfg.scenario.kind {
                ScenarioKind::Shape => {
                    if self.robots[i].mode == Mode::Forming || self.agree[i].hop as usize >= n {
                        Mode::Forming
                    } else if unlocalized {
                        Mode::Localizing
                    } else {
                        Mode::Agreeing
                    }
                }
                _ => {
                    if unlocalized {
                        Mode::Localizing
                    } else {
                        Mode::Forming
                    }
                }
            };
            self.robots[i].mode = mode;
        }
    }

    fn enhance(&mut self, i: usize) -> Vec2 {
        let c = &self.cfg.control;
        let distances: Vec<f64> = self.neighbors[i]
            .iter()
            .map(|&j| self.links[&pair_key(i, j)].last_distance)
            .collect();
        cmd_enhance(
            &mut self.enhancers[i],
            i,
            self.cfg.radii.r_i,
            &distances,
            c.w0,
            c.w_r,
            &mut self.enh_rng[i],
            self.cfg.time.dt,
        )
    }

    fn shape_command(&mut self, i: usize, unloc: bool, prev_v: &[Vec2]) -> Vec2 {
        let c = self.cfg.control.clone();
        let enhance = if unloc {
            self.enhance(i)
        } else {
            self.enhancers[i].stop();
            Vec2::ZERO
        };
        let cmds_agree = Commands {
            enhance,
            ..Commands::default()
        };
        if self.robots[i].mode != Mode::Forming {
            return control_step(Phase::Agreement, unloc, &cmds_agree, c.v_max);
        }
        let field = self.field.as_ref().expect("shape scenarios carry a field");
        let q = self.agree[i].q_hat;
        let mut rel = Vec::new();
        let mut inter = Vec::new();
        for &j in &self.neighbors[i] {
            let link = &self.links[&pair_key(i, j)];
            if !link.localized {
                continue;
            }
            let p = link.estimate_from(i);
            rel.push(p);
            inter.push(InteractNeighbor {
                p_hat_ij: p,
                distance: link.last_distance,
                velocity: prev_v[j],
            });
        }
        let enter = cmd_enter(q, field, c.kappa1);
        let cells = field.unoccupied_black_in_range(q, &rel, self.cfg.radii.r_sense);
        let explore = cmd_explore(q, &cells, c.kappa2, c.explore_reach);
        let rep = repulsion(&inter, c.kappa3, self.cfg.radii.r_avoid, c.mu_max);
        let base = if unloc { rep + enhance } else { enter + explore + rep };
        let vel: Vec<Vec2> = inter.iter().map(|n| n.velocity).collect();
        let v = solve_alignment(base, &vel, c.kappa4);
        // alignment evaluated at the solved velocity
        let align = (vel.iter().copied().sum::<Vec2>() - v * vel.len() as f64) * c.kappa4;
        let cmds = Commands {
            enter,
            explore,
            interact: rep + align,
            enhance,
        };
        control_step(Phase::Formation, unloc, &cmds, c.v_max)
    }

    fn tracking_command(&mut self, i: usize, unloc: bool, t: f64) -> Vec2 {
        let c = self.cfg.control.clone();
        if i == SEED_ID {
            return Vec2::ZERO;
        }
        let target = self.cfg.init.targets[i - 1];
        let rel = match self.cfg.scenario.kind {
            // the docking controller acts on the pair estimate directly
            ScenarioKind::Docking => match self.link(i, SEED_ID) {
                Some(l) => l.estimate_from(i),
                None => self.agree[i].q_hat,
            },
            _ => self.agree[i].q_hat,
        };
        let mut v = (rel - target) * -c.kappa;
        match self.cfg.localization.estimator {
            EstimatorKind::Cl => {
                if unloc {
                    v += self.enhance(i);
                } else {
                    self.enhancers[i].stop();
                }
            }
            EstimatorKind::Pe => {
                v += enhancement_velocity(i, t, c.excitation);
            }
        }
        saturate(v, c.v_max)
    }

    /// Advances one step. Returns the stop reason once the run is over.
    pub fn step(&mut self, sink: &mut dyn TraceSink) -> Result<Option<StopReason>> {
        if let Some(r) = self.stop {
            return Ok(Some(r));
        }
        let n = self.robots.len();
        let t = self.time();
        let dt = self.cfg.time.dt;

        self.refresh_neighbors();
        self.advance_links(t)?;
        let unloc: Vec<bool> = (0..n).map(|i| self.has_unlocalized(i)).collect();
        self.advance_agreement(t, &unloc);
        self.circling.clone_from(&unloc);

        let prev_v: Vec<Vec2> = self.robots.iter().map(|r| r.velocity_cmd).collect();
        let mut cmds = Vec::with_capacity(n);
        for (i, &unlocalized) in unloc.iter().enumerate() {
            let v = match self.cfg.scenario.kind {
                ScenarioKind::Shape => self.shape_command(i, unlocalized, &prev_v),
                ScenarioKind::Docking | ScenarioKind::Formation => self.tracking_command(i, unlocalized, t),
            };
            cmds.push(v);
        }
        for (r, v) in self.robots.iter_mut().zip(&cmds) {
            r.velocity_cmd = *v;
        }

        let stride = if self.options.metrics_stride > 0 {
            self.options.metrics_stride
        } else {
            ((0.1 / dt).round() as usize).max(1)
        };
        if self.k.is_multiple_of(stride as u64) {
            let m = self.snapshot_metrics();
            self.metrics.push(m);
        }
        if self.k.is_multiple_of(self.cfg.time.trace_every as u64) {
            self.emit(sink, t)?;
        }

        let sigma = self.cfg.noise.odometry_sigma;
        for (i, r) in self.robots.iter_mut().enumerate() {
            let u = noisy_displacement(r.velocity_cmd * dt, sigma * dt, &mut self.odo_rng[i]);
            r.odometry += u;
            r.position += r.velocity_cmd * dt;
        }
        self.k += 1;

        let all_forming = self.robots.iter().all(|r| r.mode == Mode::Forming);
        if all_forming && self.agreed_at.is_none() {
            self.agreed_at = Some(t);
        }
        let t_next = self.time();
        if all_forming && self.options.stop_when_agreed {
            self.stop = Some(StopReason::Agreed);
        } else if all_forming && cmds.iter().all(|v| v.norm() < self.cfg.time.v_stop) {
            let since = *self.still_since.get_or_insert(t);
            if t_next - since >= self.cfg.time.t_hold - 1e-9 {
                self.stop = Some(StopReason::Static);
            }
        } else {
            self.still_since = None;
        }
        if self.stop.is_none() && t_next >= self.cfg.time.max_time - 1e-9 {
            self.stop = Some(StopReason::MaxTime);
        }
        Ok(self.stop)
    }

    /// Current `q̂_i = q̂_i,0 + z_i`.
    pub fn position_estimate(&self, i: usize) -> Vec2 {
        self.agree[i].q0_hat + self.robots[i].odometry
    }

    /// Current estimate of `p_a − p_b` from the pair's estimator.
    pub fn pair_estimate(&self, a: usize, b: usize) -> Option<Vec2> {
        let l = self.link(a, b)?;
        let p = l.est.p0_hat + self.robots[l.i].odometry - self.robots[l.j].odometry - l.z_ref;
        Some(if a == l.i { p } else { -p })
    }

    /// `‖q̂_i − (p_i − p_0(t0))‖` for every robot.
    pub fn agreement_errors(&self) -> Vec<f64> {
        (0..self.robots.len())
            .map(|i| (self.position_estimate(i) - (self.robots[i].position - self.origin)).norm())
            .collect()
    }

    /// Error of every localized pair estimate, `(i, j, ‖p̂_ij − p_ij‖)`.
    pub fn pair_errors(&self) -> Vec<(usize, usize, f64)> {
        self.links
            .values()
            .filter(|l| l.localized)
            .map(|l| {
                let truth = self.robots[l.i].position - self.robots[l.j].position;
                let est = self.pair_estimate(l.i, l.j).unwrap_or_default();
                (l.i, l.j, (est - truth).norm())
            })
            .collect()
    }

    /// `‖p_i − p_0 − p*_i‖` for every non-seed robot with a target.
    pub fn tracking_errors(&self) -> Vec<f64> {
        let p0 = self.robots[SEED_ID].position;
        self.cfg
            .init
            .targets
            .iter()
            .enumerate()
            .filter(|(k, _)| k + 1 < self.robots.len())
            .map(|(k, &target)| (self.robots[k + 1].position - p0 - target).norm())
            .collect()
    }

    pub fn snapshot_metrics(&mut self) -> MetricsRow {
        let t = self.time();
        let positions: Vec<Vec2> = self.robots.iter().map(|r| r.position).collect();
        let (coverage, entering, uniformity) = match &self.field {
            Some(f) => {
                let rel: Vec<Vec2> = positions.iter().map(|&p| p - self.origin).collect();
                shape_metrics(f, &rel)
            }
            None => (0.0, 0.0, 0.0),
        };
        let agree = self.agreement_errors();
        let mean_agree = agree.iter().sum::<f64>() / agree.len() as f64;
        let max_of = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0, f64::max);
        if let Some(m) = &self.lpb {
            let q: Vec<Vec2> = (1..self.robots.len())
                .map(|i| self.agree[i].q0_hat - self.true_initial_offset(i))
                .collect();
            self.lyapunov_trace.push((t, lyapunov(m, &q)));
        }
        MetricsRow {
            t,
            coverage,
            entering,
            uniformity,
            min_pair_distance: min_pair_distance(&positions),
            max_speed: max_of(&mut self.robots.iter().map(|r| r.velocity_cmd.norm())),
            mean_agree_error: mean_agree,
            max_agree_error: max_of(&mut agree.iter().copied()),
            max_pair_error: max_of(&mut self.pair_errors().into_iter().map(|e| e.2)),
            max_tracking_error: max_of(&mut self.tracking_errors().into_iter()),
        }
    }

    fn emit(&self, sink: &mut dyn TraceSink, t: f64) -> Result<()> {
        for (r, a) in self.robots.iter().zip(&self.agree) {
            let truth = r.position - self.origin;
            sink.robot(&TraceRow {
                t,
                id: r.id,
                mode: r.mode,
                px: r.position.x,
                py: r.position.y,
                vx: r.velocity_cmd.x,
                vy: r.velocity_cmd.y,
                qx_hat: a.q_hat.x,
                qy_hat: a.q_hat.y,
                agree_err: (a.q_hat - truth).norm(),
                hop: a.hop,
            })?;
        }
        for l in self.links.values() {
            let truth = self.robots[l.i].position - self.robots[l.j].position;
            let er = l.est.batch.eigen_ratio();
            sink.pair(&PairRow {
                t,
                i: l.i,
                j: l.j,
                est_err: (l.est.estimate() - truth).norm(),
                eigen_ratio: er.ratio,
                rank: l.est.batch.rank(),
            })?;
        }
        Ok(())
    }

    /// Agreement error bound for the initial graph, using the data each
    /// initial pair has collected so far.
    pub fn bounds(&self) -> Option<AgreementBounds> {
        let lpb = self.lpb.as_ref()?;
        let a = &self.cfg.agreement;
        let mut edges = Vec::new();
        for (i, j) in self.initial_graph.edges() {
            let link = self.links.get(&(i, j))?;
            let rate = predicted_rate(&link.est.batch.info(), self.cfg.control.v_max, self.cfg.time.dt).ok()?;
            let truth = self.initial_positions[i] - self.initial_positions[j];
            edges.push(EdgeBoundInput {
                rate,
                initial_error: truth.norm(),
            });
        }
        let counts: Vec<usize> = (1..self.robots.len()).map(|i| self.initial_neighbors[i].len()).collect();
        let t_a = crate::agreement::settling_time(&edges, a.epsilon, self.cfg.time.dt);
        let v_l = self
            .lyapunov_trace
            .iter()
            .find(|(t, _)| *t >= t_a)
            .or(self.lyapunov_trace.last())
            .map_or(0.0, |x| x.1);
        agreement_time_bounds(&BoundInputs {
            lpb,
            epsilon: a.epsilon,
            gamma: a.gamma,
            alpha: a.alpha,
            neighbor_counts: &counts,
            edges: &edges,
            dt: self.cfg.time.dt,
            v_l_at_ta: v_l,
        })
        .ok()
    }

    /// Runs to completion.
    pub fn run(&mut self, sink: &mut dyn TraceSink) -> Result<RunSummary> {
        let start = Instant::now();
        while self.step(sink)?.is_none() {}
        let last = self.snapshot_metrics();
        if self.metrics.last().map(|m| m.t) != Some(last.t) {
            self.metrics.push(last);
        }
        Ok(self.summary(start.elapsed().as_secs_f64()))
    }

    pub fn summary(&self, wall_time_s: f64) -> RunSummary {
        RunSummary {
            kind: self.cfg.scenario.kind,
            n: self.robots.len(),
            seed: self.cfg.scenario.seed,
            steps: self.k,
            t_end: self.time(),
            stop_reason: self.stop.unwrap_or(StopReason::MaxTime),
            wall_time_s,
            metrics: self.metrics.last().copied().unwrap_or_default(),
            localized_pairs: self.links.values().filter(|l| l.localized).count(),
            total_pairs: self.links.len(),
            inexact_schedules: self.links.values().filter(|l| !l.schedule.exact).count(),
            agreed_at: self.agreed_at,
            bounds: if self.options.compute_bounds { self.bounds() } else { None },
        }
    }

    /// Order-sensitive digest of the full robot state, for determinism checks.
    pub fn state_digest(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        for (r, a) in self.robots.iter().zip(&self.agree) {
            eat(r.position.x);
            eat(r.position.y);
            eat(r.odometry.x);
            eat(r.odometry.y);
            eat(a.q0_hat.x);
            eat(a.q0_hat.y);
        }
        for l in self.links.values() {
            eat(l.est.p0_hat.x);
            eat(l.est.p0_hat.y);
        }
        h
    }
}
