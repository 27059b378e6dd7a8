//! Lagrangian mechanics on Lie algebroids in local coordinates.
//!
//! The crate assembles and integrates the Euler-Lagrange-Poincare equations
//! `rho^i_I dL/dq^i - C^K_{IJ} xi^J dL/dxi^K - d/dt dL/dxi^I = 0`, `q_dot = rho(q) xi`,
//! their implicit Hamilton-Pontryagin form, and compares flows related by algebroid
//! morphisms and by Routh reduction.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algebroid;
pub mod catalog;
#[cfg(feature = "cli")]
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fd;
pub mod lagrangian;
pub mod linalg;
pub mod reduction;

pub use error::{Error, Result};
