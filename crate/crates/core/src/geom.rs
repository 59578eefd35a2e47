//! Planar vectors and 2×2 symmetric matrices.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or displacement in the plane, in meters (or m/s for velocities).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Vec2::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector in the same direction, or zero for the zero vector.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec2::ZERO
        }
    }

    /// Scales the vector radially so that its norm does not exceed `max`.
    pub fn clamp_norm(self, max: f64) -> Vec2 {
        let n = self.norm();
        if n > max && n > 0.0 {
            self * (max / n)
        } else {
            self
        }
    }

    /// Outer product `self selfᵀ`.
    pub fn outer(self) -> Sym2 {
        Sym2::new(self.x * self.x, self.x * self.y, self.y * self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl std::iter::Sum for Vec2 {
    fn sum<I: Iterator<Item = Vec2>>(iter: I) -> Vec2 {
        iter.fold(Vec2::ZERO, |a, b| a + b)
    }
}

/// Symmetric 2×2 matrix `[[a1, a2], [a2, a3]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        a1: 0.0,
        a2: 0.0,
        a3: 0.0,
    };

    pub const IDENTITY: Sym2 = Sym2 {
        a1: 1.0,
        a2: 0.0,
        a3: 1.0,
    };

    pub const fn new(a1: f64, a2: f64, a3: f64) -> Self {
        Sym2 { a1, a2, a3 }
    }

    pub const fn diag(a1: f64, a3: f64) -> Self {
        Sym2 { a1, a2: 0.0, a3 }
    }

    /// Closed-form eigenvalues `(λ_min, λ_max)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a1 + self.a3);
        let half_gap = 0.5 * (self.a1 - self.a3).hypot(2.0 * self.a2);
        (mean - half_gap, mean + half_gap)
    }

    pub fn trace(&self) -> f64 {
        self.a1 + self.a3
    }

    pub fn det(&self) -> f64 {
        self.a1 * self.a3 - self.a2 * self.a2
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a1 * v.x + self.a2 * v.y, self.a2 * v.x + self.a3 * v.y)
    }

    /// Largest absolute entry, used for scale-relative tolerances.
    pub fn max_abs(&self) -> f64 {
        self.a1.abs().max(self.a2.abs()).max(self.a3.abs())
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, rhs: Sym2) -> Sym2 {
        Sym2::new(self.a1 + rhs.a1, self.a2 + rhs.a2, self.a3 + rhs.a3)
    }
}

impl AddAssign for Sym2 {
    fn add_assign(&mut self, rhs: Sym2) {
        self.a1 += rhs.a1;
        self.a2 += rhs.a2;
        self.a3 += rhs.a3;
    }
}

impl Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, rhs: f64) -> Sym2 {
        Sym2::new(self.a1 * rhs, self.a2 * rhs, self.a3 * rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        assert_eq!(Sym2::diag(4.0, 1.0).eigenvalues(), (1.0, 4.0));
        assert_eq!(Sym2::IDENTITY.eigenvalues(), (1.0, 1.0));
    }

    #[test]
    fn eigenvalues_of_rank_one() {
        let (lo, hi) = Sym2::new(1.0, 1.0, 1.0).eigenvalues();
        assert!(lo.abs() < 1e-15);
        assert!((hi - 2.0).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues_match_trace_and_det() {
        let m = Sym2::new(3.0, -1.25, 0.5);
        let (lo, hi) = m.eigenvalues();
        assert!((lo + hi - m.trace()).abs() < 1e-12);
        assert!((lo * hi - m.det()).abs() < 1e-12);
    }

    #[test]
    fn clamp_preserves_direction() {
        let v = Vec2::new(3.0, 4.0).clamp_norm(1.0);
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert!((v.x / v.y - 0.75).abs() < 1e-15);
        assert_eq!(Vec2::new(0.1, 0.0).clamp_norm(1.0), Vec2::new(0.1, 0.0));
    }

    #[test]
    fn normalized_zero_is_zero() {
        assert_eq!(Vec2::ZERO.normalized(), Vec2::ZERO);
    }
}
