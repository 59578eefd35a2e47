//! Shared world types: robot state, the interaction graph, and sensor noise.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Id of the seed robot whose initial position anchors the shape.
pub const SEED_ID: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Collecting data with unlocalized neighbors (enhancement motion).
    Localizing,
    /// All neighbors localized, waiting for the agreement to settle.
    Agreeing,
    /// Agreement certified by the hop counter; running the formation controller.
    Forming,
    Idle,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Localizing => "localizing",
            Mode::Agreeing => "agreeing",
            Mode::Forming => "forming",
            Mode::Idle => "idle",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "localizing" => Some(Mode::Localizing),
            "agreeing" => Some(Mode::Agreeing),
            "forming" => Some(Mode::Forming),
            "idle" => Some(Mode::Idle),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: usize,
    /// Ground-truth position.
    pub position: Vec2,
    /// Accumulated measured displacement since t0.
    pub odometry: Vec2,
    pub velocity_cmd: Vec2,
    pub heading: f64,
    pub mode: Mode,
    pub hop: u32,
}

impl RobotState {
    pub fn new(id: usize, position: Vec2) -> Self {
        RobotState {
            id,
            position,
            odometry: Vec2::ZERO,
            velocity_cmd: Vec2::ZERO,
            heading: 0.0,
            mode: Mode::Localizing,
            hop: 0,
        }
    }
}

/// Undirected interaction graph over robots `0..n_total`, robot 0 being the seed.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InteractionGraph {
    n_total: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl InteractionGraph {
    pub fn new(n_total: usize) -> Self {
        InteractionGraph {
            n_total,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n_total: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = InteractionGraph::new(n_total);
        for (i, j) in edges {
            g.add_edge(i, j);
        }
        g
    }

    /// Graph of all pairs whose distance is at most `radius`.
    pub fn within_radius(positions: &[Vec2], radius: f64) -> Self {
        let mut g = InteractionGraph::new(positions.len());
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if positions[i].distance(positions[j]) <= radius {
                    g.add_edge(i, j);
                }
            }
        }
        g
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i != j && i < self.n_total && j < self.n_total {
            self.edges.insert((i.min(j), i.max(j)));
        }
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// μ_i: whether robot `i` is adjacent to the seed.
    pub fn informed(&self, i: usize) -> bool {
        i != SEED_ID && self.adjacent(i, SEED_ID)
    }

    /// Number of neighbors among all robots, seed included.
    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn is_connected(&self) -> bool {
        if self.n_total == 0 {
            return true;
        }
        let mut seen = vec![false; self.n_total];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for nb in self.neighbors(k) {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// `ℒ + ℬ` over the non-seed robots `1..n_total` (row `i-1` is robot `i`).
pub fn laplacian_plus_b(graph: &InteractionGraph) -> DMatrix<f64> {
    let n = graph.n_total().saturating_sub(1);
    let mut m = DMatrix::zeros(n, n);
    for (a, b) in graph.edges() {
        if a == SEED_ID {
            m[(b - 1, b - 1)] += 1.0;
            continue;
        }
        let (i, j) = (a - 1, b - 1);
        m[(i, i)] += 1.0;
        m[(j, j)] += 1.0;
        m[(i, j)] -= 1.0;
        m[(j, i)] -= 1.0;
    }
    m
}

/// Smallest eigenvalue of a symmetric matrix (dense solver).
pub fn lambda_min_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NAN;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of range noise (m).
    pub distance_sigma: f64,
    /// Standard deviation of odometry velocity noise (m/s).
    pub odometry_sigma: f64,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn noiseless(rng_seed: u64) -> Self {
        NoiseModel {
            distance_sigma: 0.0,
            odometry_sigma: 0.0,
            rng_seed,
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Range measurement between robots `i` and `j`, clamped at zero.
pub fn measure_distance<R: Rng + ?Sized>(
    robots: &[RobotState],
    i: usize,
    j: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    let pi = robots.get(i).ok_or(Error::UnknownRobot(i))?.position;
    let pj = robots.get(j).ok_or(Error::UnknownRobot(j))?.position;
    Ok(noisy_range(pi.distance(pj), noise.distance_sigma, rng))
}

pub(crate) fn noisy_range<R: Rng + ?Sized>(truth: f64, sigma: f64, rng: &mut R) -> f64 {
    (truth + gaussian(rng, sigma)).max(0.0)
}

/// Odometry reading over a window during which `velocity_cmd` was held.
///
/// The reading is also accumulated into `robot.odometry`.
pub fn measure_displacement<R: Rng + ?Sized>(
    robot: &mut RobotState,
    dt_window: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Vec2 {
    let u = noisy_displacement(robot.velocity_cmd * dt_window, noise.odometry_sigma * dt_window, rng);
    robot.odometry += u;
    u
}

pub(crate) fn noisy_displacement<R: Rng + ?Sized>(truth: Vec2, sigma: f64, rng: &mut R) -> Vec2 {
    let ex = gaussian(rng, sigma);
    let ey = gaussian(rng, sigma);
    truth + Vec2::new(ex, ey)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::split_rng;

    fn robots(points: &[(f64, f64)]) -> Vec<RobotState> {
        points
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| RobotState::new(k, Vec2::new(x, y)))
            .collect()
    }

    #[test]
    fn pythagorean_distance() {
        let w = robots(&[(0.0, 0.0), (3.0, 4.0)]);
        let mut rng = split_rng(1, 0, "dist");
        let d = measure_distance(&w, 0, 1, &NoiseModel::noiseless(1), &mut rng).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn coincident_distance_is_zero() {
        let w = robots(&[(2.0, 2.0), (2.0, 2.0)]);
        let mut rng = split_rng(1, 0, "dist");
        let d = measure_distance(&w, 0, 1, &NoiseModel::noiseless(1), &mut rng).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn unknown_id_is_lookup_error() {
        let w = robots(&[(0.0, 0.0)]);
        let mut rng = split_rng(1, 0, "dist");
        let err = measure_distance(&w, 0, 3, &NoiseModel::noiseless(1), &mut rng).unwrap_err();
        assert!(matches!(err, Error::UnknownRobot(3)));
    }

    #[test]
    fn noisy_distance_mean_within_three_standard_errors() {
        let w = robots(&[(1.0, 0.0), (0.0, 0.0)]);
        let noise = NoiseModel {
            distance_sigma: 0.02,
            odometry_sigma: 0.0,
            rng_seed: 9,
        };
        let mut rng = split_rng(9, 0, "dist");
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|_| measure_distance(&w, 0, 1, &noise, &mut rng).unwrap())
            .sum();
        let mean = sum / n as f64;
        assert!((mean - 1.0).abs() < 3.0 * 0.02 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn range_never_negative() {
        let mut rng = split_rng(3, 0, "dist");
        for _ in 0..10_000 {
            assert!(noisy_range(0.0, 0.5, &mut rng) >= 0.0);
        }
    }

    #[test]
    fn noiseless_displacement_is_exact() {
        let mut r = RobotState::new(1, Vec2::ZERO);
        let mut rng = split_rng(1, 1, "odom");
        r.velocity_cmd = Vec2::new(1.0, 0.0);
        let u = measure_displacement(&mut r, 1.0, &NoiseModel::noiseless(1), &mut rng);
        assert_eq!(u, Vec2::new(1.0, 0.0));
        assert_eq!(r.odometry, Vec2::new(1.0, 0.0));
        r.velocity_cmd = Vec2::ZERO;
        let u = measure_displacement(&mut r, 1.0, &NoiseModel::noiseless(1), &mut rng);
        assert_eq!(u, Vec2::ZERO);
    }

    #[test]
    fn displacement_noise_covariance_matches_model() {
        let noise = NoiseModel {
            distance_sigma: 0.0,
            odometry_sigma: 0.002,
            rng_seed: 5,
        };
        let mut rng = split_rng(5, 2, "odom");
        let n = 100_000;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let mut r = RobotState::new(2, Vec2::ZERO);
            r.velocity_cmd = Vec2::new(1.0, 1.0);
            let e = measure_displacement(&mut r, 0.5, &noise, &mut rng) - Vec2::new(0.5, 0.5);
            sx += e.x;
            sy += e.y;
            sxx += e.x * e.x;
            syy += e.y * e.y;
            sxy += e.x * e.y;
        }
        let nf = n as f64;
        let var = (0.002f64 * 0.5).powi(2);
        assert!((sx / nf).abs() < 4.0 * var.sqrt() / nf.sqrt());
        assert!((sy / nf).abs() < 4.0 * var.sqrt() / nf.sqrt());
        // sample variance of a Gaussian has relative std sqrt(2/n)
        assert!(((sxx / nf) / var - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!(((syy / nf) / var - 1.0).abs() < 4.0 * (2.0 / nf).sqrt());
        assert!((sxy / nf).abs() / var < 4.0 / nf.sqrt());
    }

    #[test]
    fn laplacian_of_path_with_one_informed() {
        // seed linked to 1; 1 - 2
        let g = InteractionGraph::from_edges(3, [(0, 1), (1, 2)]);
        let m = laplacian_plus_b(&g);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_single_informed_robot() {
        let g = InteractionGraph::from_edges(2, [(0, 1)]);
        assert_eq!(laplacian_plus_b(&g), DMatrix::from_row_slice(1, 1, &[1.0]));
    }

    #[test]
    fn chain_of_four_with_two_informed_is_positive_definite() {
        let g = InteractionGraph::from_edges(5, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)]);
        let m = laplacian_plus_b(&g);
        assert!(m.clone().symmetric_eigen().eigenvalues.iter().all(|&l| l > 0.0));
        assert!(lambda_min_sym(&m) > 0.0);
    }

    #[test]
    fn row_sums_equal_informed_flags() {
        let g = InteractionGraph::from_edges(6, [(0, 2), (1, 2), (2, 3), (3, 4), (0, 5), (4, 5)]);
        let m = laplacian_plus_b(&g);
        for i in 1..6 {
            let row: f64 = m.row(i - 1).iter().sum();
            assert_eq!(row, if g.informed(i) { 1.0 } else { 0.0 });
        }
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn graph_is_symmetric() {
        let g = InteractionGraph::from_edges(4, [(3, 1), (2, 0)]);
        assert!(g.adjacent(1, 3) && g.adjacent(3, 1));
        assert!(g.adjacent(0, 2) && g.adjacent(2, 0));
        assert!(!g.adjacent(1, 2));
    }
}
