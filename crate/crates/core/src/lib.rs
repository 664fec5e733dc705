//! Decision-focused learning over convex quadratic cone programs.
//!
//! The crate bundles a dense Douglas–Rachford cone solver, implicit
//! differentiation of its fixed point, the decision-regret loss, tree
//! learners, gradient boosting against that loss, and synthetic benchmark
//! generators.

pub mod boosting;
pub mod cones;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod qcp;
pub mod qcpdiff;
pub mod selfcheck;
pub mod spo;
pub mod trees;

pub use error::{Error, Result};
