//! Property suites for the estimator contraction, circular-excitation
//! optimality and finite-time agreement results.
//!
//! Each check is self-contained and seeded, so the same suites back the
//! `check-theorems` command and the acceptance tests.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::agreement::{agreement_step, lyapunov, agreement_time_bounds, AgreementState, BoundInputs, NeighborInput};
use crate::geom::Vec2;
use crate::relloc::{
    eigen_ratio, enhancement_displacement, enhancement_velocity, predicted_rate, schedule_collection,
    MeasurementBatch, PairSample, RelPosEstimator,
};
use crate::rng::split_rng;
use crate::sim::{presets, EngineOptions, NullSink, Simulation};
use crate::swarm::{laplacian_plus_b, InteractionGraph};

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub wall_time_s: f64,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {} ({:.2} s)", self.name, self.detail, self.wall_time_s)
    }
}

fn timed(name: &str, body: impl FnOnce() -> (bool, String)) -> CheckLine {
    let start = Instant::now();
    let (passed, detail) = body();
    CheckLine {
        name: name.into(),
        passed,
        detail,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn sample(u: Vec2, p0: Vec2, k: usize) -> PairSample {
    PairSample {
        u,
        y: u.dot(p0),
        d_start: 0.0,
        d_end: 0.0,
        t_index: k,
    }
}

/// Noiseless pairs with full-rank batches: every single update must shrink
/// the estimation error by at least the predicted factor.
pub fn contraction(seed: u64, pairs: usize, steps: usize) -> CheckLine {
    timed("estimator contraction", || {
        let mut rng = split_rng(seed, 0, "check-contraction");
        let (v_max, dt) = (1.0, 0.01);
        let mut violations = 0usize;
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let p0 = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let r = rng.gen_range(0.1..1.0);
            let id_i = rng.gen_range(1..6usize);
            let id_j = id_i + rng.gen_range(1..4usize);
            let h = rng.gen_range(5..40usize);
            let mut batch = MeasurementBatch::new(1, usize::MAX);
            let count = rng.gen_range(3..12usize);
            for k in 0..count {
                let (a, b) = (k as f64 * h as f64 * dt, (k + 1) as f64 * h as f64 * dt);
                let u = enhancement_displacement(id_i, r, a, b) - enhancement_displacement(id_j, r, a, b);
                batch.push(sample(u, p0, k));
            }
            if batch.rank() < 2 {
                continue;
            }
            let lambda = predicted_rate(&batch.info(), v_max, dt).expect("rank checked");
            let mut est = RelPosEstimator::new(Vec2::ZERO, batch);
            let mut err = (est.p0_hat - p0).norm();
            for k in 0..steps {
                let u = Vec2::from_polar(rng.gen_range(0.0..2.0 * v_max * dt), rng.gen_range(0.0..TAU));
                est.update(Some(&sample(u, p0, count + k))).expect("rank checked");
                let next = (est.p0_hat - p0).norm();
                if err > 1e-12 {
                    let ratio = next / err;
                    worst = worst.max(ratio / lambda);
                    if ratio > lambda * (1.0 + 1e-9) {
                        violations += 1;
                    }
                }
                err = next;
            }
        }
        (
            violations == 0,
            format!("{pairs} pairs x {steps} steps, {violations} violations, worst ratio/bound {worst:.6}"),
        )
    })
}

/// Information matrix of pair (1, 2) on their excitation circles sampled
/// with the computed schedule. `euler_dt` switches from exact displacement
/// integrals to forward-Euler sums of the commanded velocity.
pub fn circle_eigen_ratio(r: f64, dt: f64, max_interval: f64, euler_dt: Option<f64>) -> f64 {
    let sched = schedule_collection(1, 2, dt, max_interval, 1);
    let interval = sched.h as f64 * dt;
    let mut batch = MeasurementBatch::new(1, usize::MAX);
    for k in 0..sched.varsigma {
        let (a, b) = (k as f64 * interval, (k + 1) as f64 * interval);
        let u = match euler_dt {
            None => enhancement_displacement(1, r, a, b) - enhancement_displacement(2, r, a, b),
            Some(step) => {
                let n = (interval / step).round() as usize;
                (0..n)
                    .map(|m| {
                        let t = a + m as f64 * step;
                        (enhancement_velocity(1, t, r) - enhancement_velocity(2, t, r)) * step
                    })
                    .sum()
            }
        };
        batch.push(sample(u, Vec2::ZERO, k));
    }
    eigen_ratio(&batch.info()).ratio
}

/// Circular excitation with the computed schedule yields a well-conditioned
/// information matrix.
pub fn optimality() -> Vec<CheckLine> {
    let dt = PI / 1000.0;
    vec![
        timed("circle excitation, exact displacement", || {
            let ratio = circle_eigen_ratio(0.3, dt, 0.5, None);
            (ratio >= 1.0 - 1e-6, format!("eigen ratio {ratio:.9} (need ≥ 1 − 1e-6)"))
        }),
        timed("circle excitation, Euler displacement", || {
            let ratio = circle_eigen_ratio(0.3, dt, 0.5, Some(dt));
            (ratio >= 0.99, format!("eigen ratio {ratio:.6} at dt = π/1000 (need ≥ 0.99)"))
        }),
    ]
}

/// Orthogonal unit samples with `S = I` recover the relative position in a
/// single update, compared against the direct least-squares solution.
pub fn one_step_exactness() -> CheckLine {
    timed("one-step exactness", || {
        let p0 = Vec2::new(3.0, -4.0);
        let mut batch = MeasurementBatch::new(1, usize::MAX);
        batch.push(sample(Vec2::new(1.0, 0.0), p0, 0));
        batch.push(sample(Vec2::new(0.0, 1.0), p0, 1));
        let oracle = batch.least_squares().expect("full rank");
        let mut est = RelPosEstimator::new(Vec2::ZERO, batch);
        let ok = est.update(None).is_ok();
        let err = (est.p0_hat - oracle).norm();
        (ok && err <= 1e-12, format!("error to least squares {err:.3e}"))
    })
}

/// Random connected placement of `n` robots (seed first).
fn connected_positions(rng: &mut impl Rng, n: usize, r_neigh: f64) -> Vec<Vec2> {
    loop {
        let mut pts = vec![Vec2::ZERO];
        while pts.len() < n {
            let p = Vec2::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            if pts.iter().all(|q| q.distance(p) >= 0.8) {
                pts.push(p);
            }
        }
        if InteractionGraph::within_radius(&pts, r_neigh).is_connected() {
            return pts;
        }
    }
}

/// Agreement with exact injected relative positions; returns
/// `(time to enter the ball, b, t_a + t_l)`.
pub fn exact_agreement_run(seed: u64, n: usize) -> (f64, f64, f64) {
    let cfg = crate::config::ScenarioConfig::new(crate::config::ScenarioKind::Shape).agreement;
    let mut rng = split_rng(seed, 0, "check-agreement");
    let pts = connected_positions(&mut rng, n, 2.5);
    let graph = InteractionGraph::within_radius(&pts, 2.5);
    let lpb = laplacian_plus_b(&graph);
    let truth: Vec<Vec2> = pts.iter().map(|&p| p - pts[0]).collect();
    let mut states: Vec<AgreementState> = (0..n).map(|_| AgreementState::new(Vec2::ZERO)).collect();
    let q_tilde = |s: &[AgreementState]| -> Vec<Vec2> { (1..n).map(|i| s[i].q0_hat - truth[i]).collect() };
    let stacked = |q: &[Vec2]| q.iter().map(|v| v.norm_sq()).sum::<f64>().sqrt();

    let counts: Vec<usize> = (1..n).map(|i| graph.neighbors(i).len()).collect();
    let bounds = agreement_time_bounds(&BoundInputs {
        lpb: &lpb,
        epsilon: cfg.epsilon,
        gamma: cfg.gamma,
        alpha: cfg.alpha,
        neighbor_counts: &counts,
        edges: &[],
        dt: 0.01,
        v_l_at_ta: lyapunov(&lpb, &q_tilde(&states)),
    })
    .expect("connected graph");
    let deadline = bounds.t_a + bounds.t_l;
    let dt = 0.01;
    let mut t = 0.0;
    while t <= deadline {
        if stacked(&q_tilde(&states)) < bounds.b {
            return (t, bounds.b, deadline);
        }
        let next: Vec<AgreementState> = (0..n)
            .map(|i| {
                if i == 0 {
                    return states[0].clone();
                }
                let inputs: Vec<NeighborInput> = graph
                    .neighbors(i)
                    .into_iter()
                    .filter(|&j| j != 0)
                    .map(|j| NeighborInput {
                        q0_hat_j: states[j].q0_hat,
                        p_hat_ij0: truth[i] - truth[j],
                    })
                    .collect();
                let anchor = graph.adjacent(i, 0).then_some(truth[i]);
                agreement_step(&states[i], &inputs, anchor, cfg.c1, cfg.alpha, dt)
            })
            .collect();
        states = next;
        t += dt;
    }
    (f64::INFINITY, bounds.b, deadline)
}

/// Exact relative positions: the stacked agreement error enters the ball of
/// radius `b` no later than `t_a + t_l`, for every seed.
pub fn agreement_bound(seed: u64, runs: u64) -> CheckLine {
    timed("agreement within bound", || {
        let mut misses = 0;
        let mut worst = 0.0f64;
        for s in 0..runs {
            let (t, _, deadline) = exact_agreement_run(seed.wrapping_add(s), 10);
            if !t.is_finite() {
                misses += 1;
            } else {
                worst = worst.max(t / deadline);
            }
        }
        (
            misses == 0,
            format!("{runs} seeds, {misses} missed the deadline, latest entry at {:.1}% of t_a + t_l", worst * 100.0),
        )
    })
}

/// Estimators in the loop: largest per-robot agreement error once every
/// robot has finished agreeing.
pub fn agreement_in_loop(seed: u64) -> CheckLine {
    timed("agreement with estimators in the loop", || {
        let mut cfg = presets::shape("dart", 10);
        cfg.scenario.seed = seed;
        cfg.time.max_time = 300.0;
        let opts = EngineOptions {
            stop_when_agreed: true,
            ..EngineOptions::default()
        };
        let mut sim = match Simulation::with_options(cfg, opts) {
            Ok(s) => s,
            Err(e) => return (false, format!("setup failed: {e}")),
        };
        let summary = match sim.run(&mut NullSink) {
            Ok(s) => s,
            Err(e) => return (false, format!("run failed: {e}")),
        };
        let worst = sim.agreement_errors().into_iter().fold(0.0, f64::max);
        let agreed = summary.agreed_at.is_some();
        (
            agreed && worst < 0.01,
            format!(
                "c1 = 0.1, α = 0.5: agreed at {}, max agreement error {worst:.4} m (need < 0.01)",
                summary.agreed_at.map_or("never".into(), |t| format!("{t:.1} s"))
            ),
        )
    })
}

/// All suites with the given seed.
pub fn all(seed: u64) -> Vec<CheckLine> {
    let mut out = vec![contraction(seed, 100, 50)];
    out.extend(optimality());
    out.push(one_step_exactness());
    out.push(agreement_bound(seed, 10));
    out.push(agreement_in_loop(seed));
    out
}
