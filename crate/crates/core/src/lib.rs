//! Simulation and verification toolkit for the H^k mean curvature flow
//! `∂F/∂t = −H^k ν` of closed convex surfaces.

// `!(x > 0.0)` is used on purpose so that NaN lands on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod axisym;
pub mod cli;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod monitors;
pub mod residual;
pub mod scenario;
pub mod sphere;

pub use error::{Error, Result};
