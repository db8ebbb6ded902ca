//! Observer-based safety-critical control.
//!
//! The crate couples an estimation-error-quantified (EEQ) observer, which
//! ships a known bound `M(t)` on `‖x̂(t) − x(t)‖`, with adaptive control
//! barrier function constraints. The disturbance that the estimation error
//! induces on the estimated-state model is approximated by a truncated
//! Fourier series whose coefficients are adapted online; the resulting
//! single linear constraint on `u` is enforced by projecting a nominal input
//! onto a halfspace.
//!
//! Module map:
//!
//! * [`dynamics`] control-affine plants and the two example presets
//! * [`integrator`] fixed-step RK4
//! * [`observer`] observer fields and error-bound models
//! * [`fat`] Fourier basis, series evaluation and the adaptive law
//! * [`barrier`] barrier bookkeeping, ε-feasibility and constraint assembly
//! * [`qp`] analytic safety-filter QPs
//! * [`simloop`] closed-loop simulation, traces and safety reports
//! * [`presets`] the three experiment configurations

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod dynamics;
mod error;
pub mod fat;
pub mod integrator;
pub mod observer;
pub mod presets;
pub mod qp;
pub mod simloop;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
