//! Finite-time agreement on where the seed robot started.
//!
//! Every robot keeps `q̂_i,0`, its estimate of its own initial position relative
//! to the seed's initial position. Neighbors pull each other toward
//! `q̂_i − q̂_j = p̂_ij,0` through a signed-power flow, and robots that saw the
//! seed at start are additionally anchored by `p̂_i0,0`. A hop counter detects
//! network-wide convergence without global knowledge.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::swarm::lambda_min_sym;

/// `sign(x)|x|^α`.
pub fn sig(x: f64, alpha: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(alpha)
    }
}

/// Componentwise [`sig`].
pub fn sig_vec(v: Vec2, alpha: f64) -> Vec2 {
    Vec2::new(sig(v.x, alpha), sig(v.y, alpha))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementState {
    pub q0_hat: Vec2,
    /// Real-time estimate `q̂_i,0 + z_i`.
    pub q_hat: Vec2,
    /// `(t, q̂_i,0)` samples covering at least the rate window.
    pub history: VecDeque<(f64, Vec2)>,
    pub hop: u32,
}

/// What robot `i` reads from one initial neighbor `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborInput {
    pub q0_hat_j: Vec2,
    /// Estimated initial relative position `p̂_ij,0`.
    pub p_hat_ij0: Vec2,
}

impl AgreementState {
    pub fn new(q0_hat: Vec2) -> Self {
        AgreementState {
            q0_hat,
            q_hat: q0_hat,
            history: VecDeque::new(),
            hop: 0,
        }
    }

    /// Refreshes the real-time estimate from the robot's odometry.
    pub fn set_odometry(&mut self, z: Vec2) {
        self.q_hat = self.q0_hat + z;
    }

    /// Appends `(t, q̂_i,0)` and drops samples no longer needed for a
    /// `window`-long lookback.
    pub fn record(&mut self, t: f64, window: f64) {
        self.history.push_back((t, self.q0_hat));
        let cutoff = t - window + 1e-9;
        while self.history.len() >= 2 && self.history[1].0 <= cutoff {
            self.history.pop_front();
        }
    }
}

/// The bracketed consensus residual
/// `Σ_j (q̂_i − q̂_j − p̂_ij,0) + μ_i (q̂_i − p̂_i0,0)`.
pub fn consensus_residual(q0_hat_i: Vec2, neighbors: &[NeighborInput], seed_anchor: Option<Vec2>) -> Vec2 {
    let mut acc: Vec2 = neighbors
        .iter()
        .map(|n| q0_hat_i - n.q0_hat_j - n.p_hat_ij0)
        .sum();
    if let Some(p) = seed_anchor {
        acc += q0_hat_i - p;
    }
    acc
}

/// One forward-Euler step of `q̇ = −c1 sig(residual)^α`.
///
/// `seed_anchor` is `p̂_i0,0` for robots that neighbored the seed at start.
pub fn agreement_step(
    state: &AgreementState,
    neighbors: &[NeighborInput],
    seed_anchor: Option<Vec2>,
    c1: f64,
    alpha: f64,
    dt: f64,
) -> AgreementState {
    let residual = consensus_residual(state.q0_hat, neighbors, seed_anchor);
    let mut next = state.clone();
    next.q0_hat = state.q0_hat - sig_vec(residual, alpha) * (c1 * dt);
    next.q_hat = next.q0_hat + (state.q_hat - state.q0_hat);
    next
}

/// `‖q̂_i,0(t) − q̂_i,0(t − δ_t)‖ / δ_t`, or `+∞` while the history is shorter
/// than the window.
pub fn update_rate(state: &AgreementState, window: f64) -> f64 {
    let Some(&(t_now, q_now)) = state.history.back() else {
        return f64::INFINITY;
    };
    let target = t_now - window;
    // latest sample at or before the target time
    let past = state
        .history
        .iter()
        .rev()
        .find(|(t, _)| *t <= target + 1e-9);
    match past {
        Some(&(_, q_then)) => (q_now - q_then).norm() / window,
        None => f64::INFINITY,
    }
}

/// Hop counter: reset on motion, otherwise one more than the smallest
/// neighbor hop (own hop + 1 without neighbors).
pub fn hop_update(own_hop: u32, neighbor_hops: &[u32], rate: f64, delta0: f64) -> u32 {
    if rate > delta0 {
        return 0;
    }
    neighbor_hops
        .iter()
        .min()
        .copied()
        .unwrap_or(own_hop)
        .saturating_add(1)
}

/// `½ q̃ᵀ (ℒ + ℬ) q̃`, summed over both coordinates.
pub fn lyapunov(lpb: &DMatrix<f64>, q_tilde: &[Vec2]) -> f64 {
    let n = q_tilde.len();
    assert_eq!(lpb.nrows(), n, "matrix and error vector sizes differ");
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            let m = lpb[(i, j)];
            if m != 0.0 {
                v += m * q_tilde[i].dot(q_tilde[j]);
            }
        }
    }
    0.5 * v
}

/// Convergence data for one initial edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeBoundInput {
    /// Per-step contraction factor of the pair estimator.
    pub rate: f64,
    /// `‖p̃_ij,0(t_0)‖`.
    pub initial_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs<'a> {
    pub lpb: &'a DMatrix<f64>,
    pub epsilon: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// `|N_i(t_0)|` for robots `1..=n`.
    pub neighbor_counts: &'a [usize],
    pub edges: &'a [EdgeBoundInput],
    pub dt: f64,
    /// `V_l` evaluated at `t_a`.
    pub v_l_at_ta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementBounds {
    pub b: f64,
    pub t_a: f64,
    pub t_l: f64,
    pub lambda_min: f64,
}

/// Pair-estimator settling time `max ln(ε/‖p̃‖)/ln(λ) Δt`, clamped at 0.
pub fn settling_time(edges: &[EdgeBoundInput], epsilon: f64, dt: f64) -> f64 {
    edges
        .iter()
        .map(|e| {
            if e.initial_error <= epsilon {
                0.0
            } else if e.rate <= 0.0 {
                dt
            } else if e.rate >= 1.0 {
                f64::INFINITY
            } else {
                (epsilon / e.initial_error).ln() / e.rate.ln() * dt
            }
        })
        .fold(0.0, f64::max)
}

/// Agreement radius `b`, settling time `t_a`, and agreement time `t_l`.
pub fn agreement_time_bounds(inp: &BoundInputs<'_>) -> Result<AgreementBounds> {
    let lambda_min = lambda_min_sym(inp.lpb);
    if !(lambda_min > 1e-12) {
        return Err(Error::SingularGraph);
    }
    let a = inp.alpha;
    let k = a / (1.0 + a);
    let power = (1.0 + 3.0 * a) / (2.0 * a * (a + 1.0));
    let sum: f64 = inp
        .neighbor_counts
        .iter()
        .map(|&c| (c as f64 * inp.epsilon).powf(1.0 + a))
        .sum();
    let b = (k * 2f64.powf(power) * sum / ((1.0 - inp.gamma) * k * lambda_min * lambda_min)).sqrt();
    let t_a = settling_time(inp.edges, inp.epsilon, inp.dt);
    let t_l = 2.0 * (1.0 + a) * inp.v_l_at_ta.powf((1.0 - a) / 2.0) / (lambda_min * inp.gamma * (1.0 - a));
    Ok(AgreementBounds {
        b,
        t_a,
        t_l,
        lambda_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarm::{laplacian_plus_b, InteractionGraph};
    use proptest::prelude::*;

    #[test]
    fn sig_examples() {
        assert_eq!(sig_vec(Vec2::new(-8.0, 27.0), 1.0 / 3.0).x, -2.0);
        assert!((sig_vec(Vec2::new(-8.0, 27.0), 1.0 / 3.0).y - 3.0).abs() < 1e-15);
        assert_eq!(sig(0.0, 0.5), 0.0);
    }

    #[test]
    fn single_anchored_robot_converges_monotonically() {
        let target = Vec2::new(1.0, 1.0);
        let (c1, alpha, dt) = (0.1, 0.5, 0.01);
        let mut s = AgreementState::new(Vec2::ZERO);
        let mut prev = s.q0_hat;
        // scalar ODE oracle: x' = c1 sqrt(1 - x) reaches 1 at t = 2 sqrt(1)/c1 = 20 s
        for _ in 0..3000 {
            s = agreement_step(&s, &[], Some(target), c1, alpha, dt);
            // Euler chatter around the equilibrium is bounded by (c1 dt)²
            let band = (c1 * dt) * (c1 * dt);
            assert!(s.q0_hat.x >= prev.x - band && s.q0_hat.y >= prev.y - band);
            prev = s.q0_hat;
        }
        assert!((s.q0_hat - target).norm() < 1e-3);
        // fine oracle at t = 10 s: x(t) = 1 − (1 − c1 t / 2)²
        let mut s = AgreementState::new(Vec2::ZERO);
        for _ in 0..1000 {
            s = agreement_step(&s, &[], Some(target), c1, alpha, dt);
        }
        let exact = 1.0 - (1.0 - c1 * 10.0 / 2.0f64).powi(2);
        assert!((s.q0_hat.x - exact).abs() < 5e-3, "{} vs {exact}", s.q0_hat.x);
    }

    #[test]
    fn step_halving_converges() {
        let target = Vec2::new(-2.0, 0.5);
        let run = |dt: f64| {
            let mut s = AgreementState::new(Vec2::ZERO);
            for _ in 0..(5.0 / dt).round() as usize {
                s = agreement_step(&s, &[], Some(target), 0.1, 0.5, dt);
            }
            s.q0_hat
        };
        let (a, b, c) = (run(0.02), run(0.01), run(0.005));
        assert!((b - c).norm() < (a - b).norm());
    }

    #[test]
    fn balanced_residual_is_equilibrium() {
        let s = AgreementState::new(Vec2::new(1.0, 2.0));
        let n = [NeighborInput {
            q0_hat_j: Vec2::new(0.5, 0.5),
            p_hat_ij0: Vec2::new(0.5, 1.5),
        }];
        let next = agreement_step(&s, &n, Some(Vec2::new(1.0, 2.0)), 0.1, 0.5, 0.01);
        assert_eq!(next.q0_hat, s.q0_hat);
    }

    #[test]
    fn real_time_estimate_tracks_odometry() {
        let mut s = AgreementState::new(Vec2::new(1.0, 0.0));
        s.set_odometry(Vec2::new(0.25, -0.5));
        let next = agreement_step(&s, &[], Some(Vec2::ZERO), 0.1, 0.5, 0.01);
        assert!((next.q_hat - next.q0_hat - Vec2::new(0.25, -0.5)).norm() < 1e-15);
    }

    fn ramp(slope: Vec2, window: f64, steps: usize, dt: f64) -> AgreementState {
        let mut s = AgreementState::new(Vec2::ZERO);
        for k in 0..=steps {
            let t = k as f64 * dt;
            s.q0_hat = slope * t;
            s.record(t, window);
        }
        s
    }

    #[test]
    fn rate_examples() {
        let s = ramp(Vec2::ZERO, 1.0, 300, 0.01);
        assert_eq!(update_rate(&s, 1.0), 0.0);
        let s = ramp(Vec2::new(0.01, 0.0), 1.0, 300, 0.01);
        assert!((update_rate(&s, 1.0) - 0.01).abs() < 1e-12);
        let slope = Vec2::new(0.3, -0.4);
        let s = ramp(slope, 0.5, 1000, 0.001);
        assert!((update_rate(&s, 0.5) - slope.norm()).abs() < 1e-12);
        assert!(s.history.len() <= 502);
    }

    #[test]
    fn rate_is_infinite_without_history() {
        let s = ramp(Vec2::ZERO, 1.0, 50, 0.01);
        assert_eq!(update_rate(&s, 1.0), f64::INFINITY);
        assert_eq!(update_rate(&AgreementState::new(Vec2::ZERO), 1.0), f64::INFINITY);
    }

    #[test]
    fn hop_examples() {
        assert_eq!(hop_update(7, &[3, 5], 0.5, 0.01), 0);
        assert_eq!(hop_update(0, &[3, 5], 0.001, 0.01), 4);
        assert_eq!(hop_update(2, &[], 0.0, 0.01), 3);
    }

    #[test]
    fn converged_chain_reaches_n_within_n_rounds() {
        // path 0 - 1 - 2 - ... - n; the seed reports its own counter too
        let n = 8usize;
        let mut hops = vec![0u32; n + 1];
        for _round in 0..n {
            let prev = hops.clone();
            for i in 0..=n {
                let mut nb = Vec::new();
                if i > 0 {
                    nb.push(prev[i - 1]);
                }
                if i < n {
                    nb.push(prev[i + 1]);
                }
                hops[i] = hop_update(prev[i], &nb, 0.0, 0.01);
            }
        }
        assert!(hops.iter().all(|&h| h as usize >= n), "{hops:?}");
    }

    fn two_robot_matrix() -> DMatrix<f64> {
        // seed - 1 - 2 path
        laplacian_plus_b(&InteractionGraph::from_edges(3, [(0, 1), (1, 2)]))
    }

    #[test]
    fn bounds_match_hand_arithmetic() {
        let m = two_robot_matrix();
        // [[2,-1],[-1,1]] has λ_min = (3 - √5)/2
        let lam = (3.0 - 5f64.sqrt()) / 2.0;
        let edges = [
            EdgeBoundInput { rate: 0.9, initial_error: 1.0 },
            EdgeBoundInput { rate: 0.5, initial_error: 4.0 },
        ];
        let inp = BoundInputs {
            lpb: &m,
            epsilon: 0.1,
            gamma: 0.5,
            alpha: 0.5,
            neighbor_counts: &[2, 1],
            edges: &edges,
            dt: 0.01,
            v_l_at_ta: 16.0,
        };
        let got = agreement_time_bounds(&inp).unwrap();
        // 2^((1+1.5)/(2*0.5*1.5)) = 2^(5/3)
        let sum = 0.2f64.powf(1.5) + 0.1f64.powf(1.5);
        let b = (2f64.powf(5.0 / 3.0) * sum / (0.5 * lam * lam)).sqrt();
        let t_a = f64::max(0.1f64.ln() / 0.9f64.ln(), (0.1f64 / 4.0).ln() / 0.5f64.ln()) * 0.01;
        let t_l = 2.0 * 1.5 * 16f64.powf(0.25) / (lam * 0.5 * 0.5);
        assert!((got.lambda_min - lam).abs() < 1e-12);
        assert!((got.b - b).abs() < 1e-12 * b);
        assert!((got.t_a - t_a).abs() < 1e-12);
        assert!((got.t_l - t_l).abs() < 1e-9 * t_l);
    }

    #[test]
    fn settled_edges_give_zero_settling_time() {
        let edges = [
            EdgeBoundInput { rate: 0.9, initial_error: 0.001 },
            EdgeBoundInput { rate: 0.5, initial_error: 0.0 },
        ];
        assert_eq!(settling_time(&edges, 0.01, 0.01), 0.0);
    }

    #[test]
    fn settling_time_grows_as_epsilon_shrinks() {
        let edges = [EdgeBoundInput { rate: 0.99, initial_error: 3.0 }];
        let mut last = 0.0;
        for k in 1..12 {
            let eps = 10f64.powi(-k);
            let t = settling_time(&edges, eps, 0.01);
            assert!(t > last);
            last = t;
        }
        assert!(last > 20.0);
    }

    #[test]
    fn singular_matrix_is_reported() {
        // robots 1 and 2 linked to each other but nobody sees the seed
        let m = laplacian_plus_b(&InteractionGraph::from_edges(3, [(1, 2)]));
        let inp = BoundInputs {
            lpb: &m,
            epsilon: 0.1,
            gamma: 0.5,
            alpha: 0.5,
            neighbor_counts: &[1, 1],
            edges: &[],
            dt: 0.01,
            v_l_at_ta: 1.0,
        };
        assert!(matches!(agreement_time_bounds(&inp), Err(Error::SingularGraph)));
    }

    #[test]
    fn lyapunov_of_path() {
        let m = two_robot_matrix();
        let q = [Vec2::new(1.0, 0.0), Vec2::new(1.0, 2.0)];
        // x: [1,1] M [1,1]ᵀ = 2 - 2 + 1 = 1; y: [0,2] -> 4
        assert!((lyapunov(&m, &q) - 2.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn sig_is_odd(x in -100.0f64..100.0, alpha in 0.01f64..0.99) {
            prop_assert_eq!(sig(-x, alpha), -sig(x, alpha));
        }

        #[test]
        fn step_is_zero_iff_residual_is_zero(
            qx in -5.0f64..5.0, qy in -5.0f64..5.0,
            jx in -5.0f64..5.0, jy in -5.0f64..5.0,
            px in -5.0f64..5.0, py in -5.0f64..5.0,
        ) {
            let s = AgreementState::new(Vec2::new(qx, qy));
            let n = [NeighborInput { q0_hat_j: Vec2::new(jx, jy), p_hat_ij0: Vec2::new(px, py) }];
            let r = consensus_residual(s.q0_hat, &n, None);
            let next = agreement_step(&s, &n, None, 0.1, 0.5, 0.01);
            prop_assert_eq!(next.q0_hat == s.q0_hat, r == Vec2::ZERO);
        }
    }
}
