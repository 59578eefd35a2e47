//! Distributed relative localization and shape formation for robot swarms
//! that only carry range sensors and odometry.

// `!(x > 0.0)` is used on purpose so NaN takes the degenerate branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agreement;
pub mod behavior;
pub mod checks;
pub mod config;
pub mod error;
pub mod geom;
pub mod relloc;
pub mod rng;
pub mod shape;
pub mod sim;
pub mod swarm;

pub use error::{Error, Result};
pub use geom::{Sym2, Vec2};
