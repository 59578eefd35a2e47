//! Per-robot velocity commands and the neighbor rule.
//!
//! Four behaviors are blended: entering the gray field, exploring free target
//! cells, interacting with localized neighbors (repulsion plus velocity
//! alignment), and circling to excite the range/odometry estimator.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::shape::ShapeField;

/// Cap on the repulsion weight near zero range.
pub const MU_MAX: f64 = 1e3;

/// Remembers which pairs have ever been within the neighboring radius.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborHistory {
    n: usize,
    met: Vec<bool>,
}

impl NeighborHistory {
    pub fn new(n: usize) -> Self {
        NeighborHistory {
            n,
            met: vec![false; n * n],
        }
    }

    pub fn has_met(&self, i: usize, j: usize) -> bool {
        self.met[i * self.n + j]
    }

    fn mark(&mut self, i: usize, j: usize) {
        self.met[i * self.n + j] = true;
        self.met[j * self.n + i] = true;
    }
}

/// Current neighbors of `i`: within `r_sense` now and within `r_neigh` at some
/// step so far (this one included). `distances[j]` is the range to robot `j`;
/// the entry for `i` itself is ignored.
pub fn neighbor_set(
    i: usize,
    distances: &[f64],
    r_sense: f64,
    r_neigh: f64,
    history: &mut NeighborHistory,
) -> Vec<usize> {
    let mut out = Vec::new();
    for (j, &d) in distances.iter().enumerate() {
        if j == i {
            continue;
        }
        if d < r_neigh {
            history.mark(i, j);
        }
        if d < r_sense && history.has_met(i, j) {
            out.push(j);
        }
    }
    out
}

/// Cosine window: 1 for `z ≤ 0`, `½(1 + cos πz)` on `(0, 1)`, 0 for `z ≥ 1`.
pub fn phi(z: f64) -> f64 {
    if z <= 0.0 {
        1.0
    } else if z < 1.0 {
        0.5 * (1.0 + (PI * z).cos())
    } else {
        0.0
    }
}

/// Repulsion weight `r_avoid / z − 1` inside `r_avoid`, capped at `mu_max`.
pub fn mu(z: f64, r_avoid: f64, mu_max: f64) -> f64 {
    if z > r_avoid {
        0.0
    } else if z <= 0.0 {
        mu_max
    } else {
        (r_avoid / z - 1.0).min(mu_max)
    }
}

/// Shape-entering command.
///
/// Heads toward the closest cell darker than the one the robot believes it is
/// in, with speed `κ1 ξ` where `ξ` is the gray level of the robot's own cell.
/// Zero once the robot is on a black cell.
pub fn cmd_enter(q_hat: Vec2, field: &ShapeField, kappa1: f64) -> Vec2 {
    let here = field.gray_at(q_hat);
    match field.nearest_darker_cell(q_hat) {
        Some((target, _)) => (target - q_hat).normalized() * (kappa1 * here),
        None => Vec2::ZERO,
    }
}

/// Mean-shift toward unoccupied black cells, weighted by `φ(dist / reach)`.
pub fn cmd_explore(q_hat: Vec2, cells: &[Vec2], kappa2: f64, reach: f64) -> Vec2 {
    let mut num = Vec2::ZERO;
    let mut den = 0.0;
    for &c in cells {
        let offset = c - q_hat;
        let w = phi(offset.norm() / reach);
        num += offset * w;
        den += w;
    }
    if den > 0.0 {
        num * (kappa2 / den)
    } else {
        Vec2::ZERO
    }
}

/// A localized neighbor as seen by the interaction command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteractNeighbor {
    /// Estimated `p_i − p_j`.
    pub p_hat_ij: Vec2,
    pub distance: f64,
    pub velocity: Vec2,
}

/// Repulsion part `κ3 Σ μ(d_ij) p̂_ij`.
pub fn repulsion(neighbors: &[InteractNeighbor], kappa3: f64, r_avoid: f64, mu_max: f64) -> Vec2 {
    neighbors
        .iter()
        .map(|n| n.p_hat_ij * mu(n.distance, r_avoid, mu_max))
        .sum::<Vec2>()
        * kappa3
}

/// `κ3 Σ μ(d_ij) p̂_ij + κ4 Σ (v_j − v_i)`.
pub fn cmd_interact(
    neighbors: &[InteractNeighbor],
    v_i: Vec2,
    kappa3: f64,
    kappa4: f64,
    r_avoid: f64,
    mu_max: f64,
) -> Vec2 {
    let align: Vec2 = neighbors.iter().map(|n| n.velocity - v_i).sum();
    repulsion(neighbors, kappa3, r_avoid, mu_max) + align * kappa4
}

/// Solves `v = base + κ4 Σ (v_j − v)` for `v`, the alignment fixed point.
pub fn solve_alignment(base: Vec2, neighbor_velocities: &[Vec2], kappa4: f64) -> Vec2 {
    let sum: Vec2 = neighbor_velocities.iter().copied().sum();
    (base + sum * kappa4) / (1.0 + kappa4 * neighbor_velocities.len() as f64)
}

/// Circular-motion generator for one robot.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Enhancer {
    pub phase: f64,
    /// Angular speed of the current episode, drawn when the episode starts.
    pub omega: Option<f64>,
}

impl Enhancer {
    /// Ends the current episode; the next one draws a fresh angular speed.
    pub fn stop(&mut self) {
        self.omega = None;
    }
}

/// Angular speed `w_r U(0,1) + w0 / id`, with the seed's id counted as 1.
pub fn enhance_omega<R: Rng + ?Sized>(id: usize, w0: f64, w_r: f64, rng: &mut R) -> f64 {
    w_r * rng.gen::<f64>() + w0 / id.max(1) as f64
}

/// Localization-enhancing command: speed `r' w` along the current phase, with
/// `r' = min(r_i, min D_i)`; the phase then advances by `w dt`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_enhance<R: Rng + ?Sized>(
    state: &mut Enhancer,
    id: usize,
    r_i: f64,
    distances: &[f64],
    w0: f64,
    w_r: f64,
    rng: &mut R,
    dt: f64,
) -> Vec2 {
    let w = *state
        .omega
        .get_or_insert_with(|| enhance_omega(id, w0, w_r, rng));
    let radius = distances.iter().copied().fold(r_i, f64::min);
    let v = Vec2::from_polar(radius * w, state.phase);
    state.phase = (state.phase + w * dt) % (2.0 * PI);
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Agreement,
    Formation,
}

/// The four candidate commands for one robot at one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Commands {
    pub enter: Vec2,
    pub explore: Vec2,
    pub interact: Vec2,
    pub enhance: Vec2,
}

/// Blends the commands according to phase and whether any current neighbor
/// is still unlocalized, then saturates to `v_max`.
pub fn control_step(phase: Phase, has_unlocalized: bool, cmds: &Commands, v_max: f64) -> Vec2 {
    let v = match (phase, has_unlocalized) {
        (Phase::Agreement, false) => Vec2::ZERO,
        (Phase::Agreement, true) => cmds.enhance,
        (Phase::Formation, false) => cmds.enter + cmds.explore + cmds.interact,
        (Phase::Formation, true) => cmds.interact + cmds.enhance,
    };
    saturate(v, v_max)
}

/// Radial scaling to `‖v‖ ≤ v_max`.
pub fn saturate(v: Vec2, v_max: f64) -> Vec2 {
    v.clamp_norm(v_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::split_rng;
    use crate::shape::{gray_transform, parse_ascii};
    use proptest::prelude::*;
    use rand::Rng;

    fn one_cell(levels: u32, l_cell: f64) -> ShapeField {
        gray_transform(&parse_ascii("0").unwrap(), levels).with_cell_size(l_cell)
    }

    #[test]
    fn neighbor_rule_examples() {
        let (r_sense, r_neigh) = (4.0, 2.5);
        let mut h = NeighborHistory::new(2);
        assert_eq!(neighbor_set(0, &[0.0, r_neigh / 2.0], r_sense, r_neigh, &mut h), vec![1]);

        let mut h = NeighborHistory::new(2);
        assert!(neighbor_set(0, &[0.0, 3.0], r_sense, r_neigh, &mut h).is_empty());
    }

    #[test]
    fn neighbor_rule_scripted_trajectory() {
        // j approaches, dips inside r_neigh, leaves to 3.5, then beyond r_sense
        let (r_sense, r_neigh) = (4.0, 2.5);
        let script = [5.0, 3.5, 3.0, 2.0, 3.0, 3.9, 4.5, 3.5];
        let expect = [false, false, false, true, true, true, false, true];
        let mut h = NeighborHistory::new(2);
        for (d, want) in script.into_iter().zip(expect) {
            let got = neighbor_set(0, &[0.0, d], r_sense, r_neigh, &mut h).contains(&1);
            assert_eq!(got, want, "at distance {d}");
        }
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(-1.0), 1.0);
        assert_eq!(phi(0.0), 1.0);
        assert!((phi(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(phi(1.0), 0.0);
    }

    #[test]
    fn mu_examples() {
        assert_eq!(mu(0.9, 1.8, MU_MAX), 1.0);
        assert_eq!(mu(2.0, 1.8, MU_MAX), 0.0);
        assert_eq!(mu(1.8, 1.8, MU_MAX), 0.0);
        assert_eq!(mu(0.0, 1.8, MU_MAX), MU_MAX);
        assert_eq!(mu(1e-9, 1.8, MU_MAX), MU_MAX);
    }

    #[test]
    fn enter_is_zero_on_black() {
        let f = one_cell(2, 2.0);
        assert_eq!(cmd_enter(Vec2::new(0.3, -0.2), &f, 10.0), Vec2::ZERO);
    }

    #[test]
    fn enter_from_gray_ring() {
        // one cell east of the only black cell sits in the ξ = 0.5 ring
        let f = one_cell(2, 2.0);
        let v = cmd_enter(Vec2::new(2.0, 0.0), &f, 10.0);
        assert!((v - Vec2::new(-5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn enter_from_far_away_points_inward() {
        let f = one_cell(2, 1.0);
        let v = cmd_enter(Vec2::new(0.0, 30.0), &f, 10.0);
        assert!(v.y < 0.0 && v.x.abs() < 1e-12);
        assert!((v.norm() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn explore_examples() {
        let q = Vec2::new(1.0, 1.0);
        let north = Vec2::new(1.0, 3.0);
        assert!((cmd_explore(q, &[north], 2.0, 4.0) - Vec2::new(0.0, 4.0)).norm() < 1e-12);
        let v = cmd_explore(q, &[Vec2::new(3.0, 1.0), Vec2::new(-1.0, 1.0)], 2.0, 4.0);
        assert!(v.norm() < 1e-12);
        assert_eq!(cmd_explore(q, &[], 2.0, 4.0), Vec2::ZERO);
        assert_eq!(cmd_explore(q, &[Vec2::new(10.0, 1.0)], 2.0, 4.0), Vec2::ZERO);
    }

    #[test]
    fn interact_examples() {
        let far = InteractNeighbor {
            p_hat_ij: Vec2::new(3.0, 0.0),
            distance: 3.0,
            velocity: Vec2::new(0.2, 0.1),
        };
        assert_eq!(cmd_interact(&[far], Vec2::new(0.2, 0.1), 1.0, 2.0, 1.8, MU_MAX), Vec2::ZERO);
        let close = InteractNeighbor {
            p_hat_ij: Vec2::new(0.9, 0.0),
            distance: 0.9,
            velocity: Vec2::ZERO,
        };
        let v = cmd_interact(&[close], Vec2::ZERO, 1.0, 2.0, 1.8, MU_MAX);
        assert!((v - Vec2::new(0.9, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn repulsion_descends_pair_potential() {
        // U(d) = r ln(1/d) ... integrates μ: dU/dd = -(r/d - 1) for d < r.
        // Moving along the command must lower U(‖p_i − p_j‖).
        let r = 1.8;
        let potential = |d: f64| if d < r { r * (r / d).ln() - (r - d) } else { 0.0 };
        let mut rng = split_rng(2, 0, "repulsion");
        for _ in 0..100 {
            let rel = Vec2::from_polar(rng.gen_range(0.1..1.7), rng.gen_range(0.0..6.3));
            let n = InteractNeighbor {
                p_hat_ij: rel,
                distance: rel.norm(),
                velocity: Vec2::ZERO,
            };
            let v = cmd_interact(&[n], Vec2::ZERO, 1.0, 0.0, r, MU_MAX);
            assert!(v.dot(rel) > 0.0);
            let h = 1e-6;
            let moved = rel + v.normalized() * h;
            assert!(potential(moved.norm()) < potential(rel.norm()));
        }
    }

    #[test]
    fn alignment_fixed_point() {
        let base = Vec2::new(0.3, -0.1);
        let nv = [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(-0.5, 0.5)];
        let k4 = 2.0;
        let v = solve_alignment(base, &nv, k4);
        let rhs = base + nv.iter().map(|&w| w - v).sum::<Vec2>() * k4;
        assert!((v - rhs).norm() < 1e-14);
        assert_eq!(solve_alignment(base, &[], k4), base);
    }

    #[test]
    fn enhance_magnitude_and_radius_clamp() {
        let mut rng = split_rng(1, 3, "enh");
        let mut e = Enhancer::default();
        let v = cmd_enhance(&mut e, 3, 0.3, &[2.0, 1.0], 6.0, 4.0, &mut rng, 0.01);
        let w = e.omega.unwrap();
        assert!((v.norm() - 0.3 * w).abs() < 1e-12);
        assert!((2.0..=6.0).contains(&w));
        let v = cmd_enhance(&mut e, 3, 0.3, &[0.2, 1.0], 6.0, 4.0, &mut rng, 0.01);
        assert!((v.norm() - 0.2 * w).abs() < 1e-12);
        e.stop();
        assert!(e.omega.is_none());
    }

    #[test]
    fn enhance_path_closes_after_one_turn() {
        let mut rng = split_rng(4, 2, "enh");
        let mut e = Enhancer::default();
        let dt = 0.01;
        let r = 0.3;
        let start = Vec2::new(1.0, -2.0);
        let mut p = start;
        let _ = cmd_enhance(&mut e, 2, r, &[], 6.0, 4.0, &mut rng, 0.0);
        let w = e.omega.unwrap();
        let steps = (2.0 * PI / (w * dt)).round() as usize;
        let mut max_dev: f64 = 0.0;
        // closed-form circle through the start point
        let center = start + Vec2::from_polar(r, e.phase + PI / 2.0);
        for _ in 0..steps {
            p += cmd_enhance(&mut e, 2, r, &[], 6.0, 4.0, &mut rng, dt) * dt;
            max_dev = max_dev.max(((p - center).norm() - r).abs());
        }
        assert!((p - start).norm() < 1e-3 * r + r * w * dt, "{}", (p - start).norm());
        assert!(max_dev < 0.05 * r);
    }

    #[test]
    fn control_step_examples() {
        let cmds = Commands {
            enter: Vec2::new(3.0, 0.0),
            explore: Vec2::ZERO,
            interact: Vec2::ZERO,
            enhance: Vec2::new(0.0, 0.5),
        };
        assert_eq!(control_step(Phase::Agreement, false, &cmds, 1.0), Vec2::ZERO);
        assert_eq!(control_step(Phase::Agreement, true, &cmds, 1.0), Vec2::new(0.0, 0.5));
        assert_eq!(control_step(Phase::Formation, false, &cmds, 1.0), Vec2::new(1.0, 0.0));
        assert_eq!(control_step(Phase::Formation, true, &cmds, 1.0), Vec2::new(0.0, 0.5));
    }

    proptest! {
        #[test]
        fn control_output_is_saturated(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0,
            bx in -50.0f64..50.0, by in -50.0f64..50.0,
            v_max in 0.01f64..5.0, formation in any::<bool>(), unloc in any::<bool>(),
        ) {
            let cmds = Commands { enter: Vec2::new(ax, ay), explore: Vec2::new(bx, by), interact: Vec2::new(ay, bx), enhance: Vec2::new(by, ax) };
            let phase = if formation { Phase::Formation } else { Phase::Agreement };
            let v = control_step(phase, unloc, &cmds, v_max);
            prop_assert!(v.norm() <= v_max * (1.0 + 1e-12));
        }

        #[test]
        fn explore_stays_in_hull(
            q in (-3.0f64..3.0, -3.0f64..3.0),
            pts in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0), 1..6),
        ) {
            let q = Vec2::new(q.0, q.1);
            let cells: Vec<Vec2> = pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            let v = cmd_explore(q, &cells, 1.0, 20.0);
            // every supporting half-plane of the offset set contains v
            let offsets: Vec<Vec2> = cells.iter().map(|&c| c - q).collect();
            for k in 0..64 {
                let dir = Vec2::from_polar(1.0, k as f64 * PI / 32.0);
                let max = offsets.iter().map(|o| o.dot(dir)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v.dot(dir) <= max + 1e-9);
            }
        }
    }
}
