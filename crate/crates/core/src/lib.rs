//! Range-based (time-of-arrival) localization.
//!
//! This crate is `no_std` (it needs `alloc`) and contains the numerical part
//! of the toolkit:
//!
//! - [`model`]: scenarios, noisy range synthesis and the lifted linear design
//!   `A y ≈ b` with `y = [x; ‖x‖²]`.
//! - [`polyspectral`]: polynomials, Sturm chains, Cauchy bounds, bisection and
//!   the simultaneous diagonalization of `(AᵀA, D)`.
//! - [`gtrs`]: the global solver for the bias-eliminated squared-range problem,
//!   a generalized trust region subproblem with one quadratic equality
//!   constraint, including the singular ("hard") case.
//! - [`estimators`]: first-step estimators (bias-eliminated, noise-estimating,
//!   their unconstrained closed forms and the weighted variants).
//! - [`refine`]: Gauss–Newton refinement, the second step of the two-step
//!   estimator.
//! - [`analysis`]: Fisher information, CRLB, closed-form finite-sample MSE of
//!   the linear estimators and Monte-Carlo aggregation.
//!
//! File formats, the Monte-Carlo harness and the command line live in the
//! `rangeloc` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
mod error;
pub mod estimators;
pub mod gtrs;
pub mod model;
pub mod polyspectral;
pub mod refine;

pub use error::{Error, Result};
