//! Penalization and mollification schemes for generalized Skorohod problems
//! and stochastic variational inequalities with oblique subgradients.
//!
//! The crate is organised bottom-up:
//!
//! - [`convex`]: catalog of convex functions with exact Moreau–Yosida maps,
//! - [`oblique_field`]: the matrix field `H(x)` and its validation,
//! - [`paths`]: uniform-grid paths, total variation, moduli, mollifier,
//! - [`det_solver`]: penalized delayed scheme, ε-refinement and oracles,
//! - [`sde`]: Brownian drivers and the pathwise stochastic scheme,
//! - [`diagnostics`]: checkers for the inequalities solutions must satisfy,
//! - [`scenario`] / [`cli`]: declarative problem files and the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod convex;
pub mod det_solver;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod oblique_field;
pub mod paths;
pub mod rng;
pub mod scenario;
pub mod sde;

pub use error::{Error, Result};
