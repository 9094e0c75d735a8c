//! Self-regularized learning in reproducing kernel Hilbert spaces.
//!
//! The crate implements gradient descent on the empirical risk in an RKHS,
//! regularized empirical risk minimization with risk matching, mirror descent
//! in weighted finite-dimensional `l^p`, data-dependent early stopping over
//! geometric stopping-time grids, and a harness that checks the deterministic
//! inequalities tying these together on trained objects.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod early_stopping;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod losses;
pub mod mirror_lp;
pub mod problem;
pub mod rerm;
pub mod rkhs_gd;
pub mod synth;
pub mod table;
pub mod verify;

pub use data::{Dataset, Points};
pub use error::{Error, Result};
pub use kernels::{KernelSpec, RkhsFunction};
pub use losses::{LossKind, LossSpec};
pub use problem::{KernelProblem, SmoothnessBound};
