//! Variable-accelerated proximal point solvers for nonlinear cone-constrained convex programs.
#![no_std]
// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity, clippy::too_many_arguments, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod analysis;
pub mod cones;
pub mod fbs;
pub mod inner;
pub mod lagrangian;
pub mod linalg;
pub mod mirror_prox;
pub mod oracles;
pub mod strong;
pub mod structured;
pub mod testbeds;
pub mod vapp;

pub use error::{Error, Result};
