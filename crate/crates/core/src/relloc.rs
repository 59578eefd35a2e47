//! Concurrent-learning relative-position estimation.
//!
//! A robot pair observes its own relative displacement `u` (from odometry) and
//! the range `d` between them. Over one collection interval the cosine rule
//! turns those into a linear measurement `y = uᵀ p0` of the unknown initial
//! relative position `p0`. The estimator keeps a batch of such samples and
//! descends on the batch residual together with the current sample; once the
//! batch information matrix `S = Σ u uᵀ` has full rank the error contracts
//! geometrically regardless of how the robots move afterwards.

use std::f64::consts::TAU;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Sym2, Vec2};

/// Relative eigenvalue below which a direction counts as unexcited.
const RANK_TOL: f64 = 1e-12;

/// `½(d_end² − d_start² − ‖u‖²) − uᵀz`.
///
/// With exact ranges this equals `uᵀ p(t0)` where `z` is the cumulative relative
/// displacement at the start of the interval.
pub fn regressand(d_start: f64, d_end: f64, u: Vec2, z: Vec2) -> f64 {
    0.5 * (d_end * d_end - d_start * d_start - u.norm_sq()) - u.dot(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub u: Vec2,
    pub y: f64,
    pub d_start: f64,
    pub d_end: f64,
    pub t_index: usize,
}

impl PairSample {
    /// Builds a sample from raw measurements; `z_start` is the cumulative
    /// relative displacement when the interval began.
    pub fn from_measurements(d_start: f64, d_end: f64, u: Vec2, z_start: Vec2, t_index: usize) -> Self {
        PairSample {
            u,
            y: regressand(d_start, d_end, u, z_start),
            d_start,
            d_end,
            t_index,
        }
    }

    /// Innovation `uᵀ p̂ − y`.
    pub fn innovation(&self, p0_hat: Vec2) -> f64 {
        self.u.dot(p0_hat) - self.y
    }
}

/// Smallest-to-largest eigenvalue ratio of an information matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenRatio {
    pub ratio: f64,
    /// False for the zero matrix, where the ratio is undefined and reported as 0.
    pub defined: bool,
}

/// `λ_min / λ_max` via the closed-form 2×2 eigenvalues.
pub fn eigen_ratio(s: &Sym2) -> EigenRatio {
    let (lo, hi) = s.eigenvalues();
    if !(hi > 0.0) {
        return EigenRatio {
            ratio: 0.0,
            defined: false,
        };
    }
    EigenRatio {
        ratio: (lo / hi).clamp(0.0, 1.0),
        defined: true,
    }
}

/// Numerical rank of a PSD 2×2 matrix.
pub fn rank(s: &Sym2) -> u8 {
    let (lo, hi) = s.eigenvalues();
    if !(hi > 0.0) {
        0
    } else if lo <= RANK_TOL * hi {
        1
    } else {
        2
    }
}

/// Recorded samples for one pair plus the running sufficient statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBatch {
    samples: Vec<PairSample>,
    info: Sym2,
    moment: Vec2,
    stride: usize,
    capacity: usize,
}

impl MeasurementBatch {
    /// Empty batch collecting every `stride` steps, holding at most `capacity` samples.
    pub fn new(stride: usize, capacity: usize) -> Self {
        MeasurementBatch {
            samples: Vec::new(),
            info: Sym2::ZERO,
            moment: Vec2::ZERO,
            stride: stride.max(1),
            capacity,
        }
    }

    /// Stores a sample unless the batch is full. Returns whether it was stored.
    pub fn push(&mut self, sample: PairSample) -> bool {
        if self.is_full() {
            return false;
        }
        self.info += sample.u.outer();
        self.moment += sample.u * sample.y;
        self.samples.push(sample);
        true
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[PairSample] {
        &self.samples
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Information matrix `S = Σ u uᵀ`.
    pub fn info(&self) -> Sym2 {
        self.info
    }

    /// `S` recomputed from the stored samples.
    pub fn recompute_info(&self) -> Sym2 {
        self.samples.iter().map(|s| s.u.outer()).fold(Sym2::ZERO, |a, b| a + b)
    }

    pub fn rank(&self) -> u8 {
        rank(&self.info)
    }

    pub fn eigen_ratio(&self) -> EigenRatio {
        eigen_ratio(&self.info)
    }

    /// `Σ_m u_m ε_m` at `p0_hat`, evaluated as `S p̂ − Σ u y`.
    pub fn batch_gradient(&self, p0_hat: Vec2) -> Vec2 {
        self.info.mul_vec(p0_hat) - self.moment
    }

    /// Least-squares solution of `u_mᵀ p = y_m`, when `S` is invertible.
    pub fn least_squares(&self) -> Option<Vec2> {
        if self.rank() < 2 {
            return None;
        }
        let s = self.info;
        let det = s.det();
        let r = self.moment;
        Some(Vec2::new(
            (s.a3 * r.x - s.a2 * r.y) / det,
            (s.a1 * r.y - s.a2 * r.x) / det,
        ))
    }

    /// CSV dump: `t_index,u_x,u_y,y,d_start,d_end`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_index,u_x,u_y,y,d_start,d_end")?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{},{},{}", s.t_index, s.u.x, s.u.y, s.y, s.d_start, s.d_end)?;
        }
        Ok(())
    }
}

/// `λ_min(S) / (‖u_now‖² + λ_max(S))²`.
pub fn learning_rate(batch: &MeasurementBatch, u_now: Vec2) -> Result<f64> {
    if batch.rank() < 2 {
        return Err(Error::NotReady);
    }
    let (lo, hi) = batch.info().eigenvalues();
    let denom = u_now.norm_sq() + hi;
    Ok(lo / (denom * denom))
}

/// Predicted per-step contraction factor of the estimation error,
/// `sqrt(1 − λ_min² / (2 v_max Δt + λ_max)²)`.
pub fn predicted_rate(info: &Sym2, v_max: f64, dt: f64) -> Result<f64> {
    if rank(info) < 2 {
        return Err(Error::NotReady);
    }
    let (lo, hi) = info.eigenvalues();
    let denom = 2.0 * v_max * dt + hi;
    Ok((1.0 - (lo * lo) / (denom * denom)).max(0.0).sqrt())
}

/// Estimate of a pair's initial relative position and its real-time value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelPosEstimator {
    pub p0_hat: Vec2,
    /// Cumulative relative displacement since the pair's reference time.
    pub z_rel: Vec2,
    pub batch: MeasurementBatch,
    pub converged: bool,
}

impl RelPosEstimator {
    pub fn new(p0_guess: Vec2, batch: MeasurementBatch) -> Self {
        RelPosEstimator {
            p0_hat: p0_guess,
            z_rel: Vec2::ZERO,
            batch,
            converged: false,
        }
    }

    /// Real-time relative position estimate `p̂0 + z`.
    pub fn estimate(&self) -> Vec2 {
        self.p0_hat + self.z_rel
    }

    /// One concurrent-learning step using the stored batch and, if present,
    /// the current sample. A rank-deficient batch leaves the estimate untouched.
    pub fn update(&mut self, current: Option<&PairSample>) -> Result<()> {
        let u_now = current.map_or(Vec2::ZERO, |c| c.u);
        let eta = learning_rate(&self.batch, u_now)?;
        let mut step = self.batch.batch_gradient(self.p0_hat);
        if let Some(c) = current {
            step += c.u * c.innovation(self.p0_hat);
        }
        self.p0_hat -= step * eta;
        Ok(())
    }
}

/// Memoryless gradient step on the current sample only.
pub fn baseline_pe_update(p0_hat: Vec2, u_now: Vec2, y_now: f64, gain: f64) -> Vec2 {
    p0_hat - u_now * (gain * (u_now.dot(p0_hat) - y_now))
}

/// Circular velocity `r [cos(t/id), sin(t/id)]` used for excitation.
pub fn enhancement_velocity(robot_id: usize, t: f64, r: f64) -> Vec2 {
    let w = 1.0 / robot_id as f64;
    Vec2::from_polar(r, w * t)
}

/// Exact integral of [`enhancement_velocity`] over `[t_a, t_b]`.
pub fn enhancement_displacement(robot_id: usize, r: f64, t_a: f64, t_b: f64) -> Vec2 {
    let id = robot_id as f64;
    let w = 1.0 / id;
    Vec2::new(
        r * id * ((w * t_b).sin() - (w * t_a).sin()),
        r * id * ((w * t_a).cos() - (w * t_b).cos()),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionSchedule {
    /// Collection interval in steps.
    pub h: usize,
    /// Samples per full turn, `2π / (hΔt)` (rounded when inexact).
    pub varsigma0: usize,
    /// Batch size `i·j·ς₀`.
    pub varsigma: usize,
    /// Whether `hΔt` divides `2π`.
    pub exact: bool,
}

/// Picks the collection interval and batch size for pair `(i, j)`.
///
/// Searches for the largest `h` with `hΔt ≤ max_interval` such that `hΔt`
/// divides `2π`; falls back to `fallback_h` with `exact = false` otherwise.
/// The seed's id 0 counts as 1 in the `i·j` product.
pub fn schedule_collection(i: usize, j: usize, dt: f64, max_interval: f64, fallback_h: usize) -> CollectionSchedule {
    let ij = i.max(1) * j.max(1);
    let h_max = (max_interval / dt + 1e-9).floor() as usize;
    for h in (1..=h_max).rev() {
        let turns = TAU / (h as f64 * dt);
        let nearest = turns.round();
        if nearest >= 1.0 && (turns - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            let varsigma0 = nearest as usize;
            return CollectionSchedule {
                h,
                varsigma0,
                varsigma: ij * varsigma0,
                exact: true,
            };
        }
    }
    let h = fallback_h.max(1);
    let varsigma0 = ((TAU / (h as f64 * dt)).round() as usize).max(1);
    CollectionSchedule {
        h,
        varsigma0,
        varsigma: ij * varsigma0,
        exact: false,
    }
}
