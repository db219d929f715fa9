//! Optimal control of semilinear parabolic equations on an interval.
//!
//! * [`grid`]: dof layout, quadrature, discrete Laplacian eigenbasis.
//! * [`parabolic`]: Crank–Nicolson state, linearized and adjoint solvers.
//! * [`control`]: cost, gradient, second variation, bathtub projection,
//!   ascent and optimality diagnostics.
//! * [`oscillation`]: concentration of oscillating solutions and Dirac-in-time
//!   perturbations.
//! * [`cli`]: configuration, batch commands and reports.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod control;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod oscillation;
pub mod parabolic;

pub use error::{Error, Result};
