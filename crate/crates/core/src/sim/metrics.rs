//! Shape-formation quality measures.

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::shape::ShapeField;

/// One snapshot of swarm-level quality measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: f64,
    /// Fraction of black cells holding at least one robot.
    pub coverage: f64,
    /// Fraction of robots inside black cells.
    pub entering: f64,
    /// Standard deviation of nearest-neighbor distances among robots inside
    /// the shape; 0 with fewer than two such robots.
    pub uniformity: f64,
    pub min_pair_distance: f64,
    pub max_speed: f64,
    pub mean_agree_error: f64,
    pub max_agree_error: f64,
    /// Largest error among localized pair estimates.
    pub max_pair_error: f64,
    /// Largest `‖p_i − p_0 − p*_i‖` when targets exist.
    pub max_tracking_error: f64,
}

pub const METRICS_HEADER: &str = "t,coverage,entering,uniformity,min_pair_distance,max_speed,mean_agree_error,max_agree_error,max_pair_error,max_tracking_error";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.coverage,
            self.entering,
            self.uniformity,
            self.min_pair_distance,
            self.max_speed,
            self.mean_agree_error,
            self.max_agree_error,
            self.max_pair_error,
            self.max_tracking_error
        )
    }
}

/// Coverage, entering rate and uniformity for positions expressed in the
/// field's frame.
pub fn shape_metrics(field: &ShapeField, positions: &[Vec2]) -> (f64, f64, f64) {
    let mut occupied = vec![false; field.width * field.height];
    let mut inside = Vec::new();
    for &p in positions {
        if let Some((c, r)) = field.cell_at(p) {
            if field.gray_of(c, r) == 0.0 {
                occupied[r * field.width + c] = true;
                inside.push(p);
            }
        }
    }
    let covered = occupied.iter().filter(|&&o| o).count();
    let coverage = if field.n_cell == 0 {
        0.0
    } else {
        covered as f64 / field.n_cell as f64
    };
    let entering = if positions.is_empty() {
        0.0
    } else {
        inside.len() as f64 / positions.len() as f64
    };
    (coverage, entering, nn_spread(&inside))
}

/// Standard deviation of each point's distance to its nearest other point.
pub fn nn_spread(points: &[Vec2]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let nn: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &q)| p.distance(q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = nn.iter().sum::<f64>() / nn.len() as f64;
    let var = nn.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / nn.len() as f64;
    var.sqrt()
}

/// Smallest distance between any two positions (`+∞` for fewer than two).
pub fn min_pair_distance(positions: &[Vec2]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            best = best.min(positions[i].distance(positions[j]));
        }
    }
    best
}
