//! Damped semilinear wave equation `u_tt + u_t − u_xx + Φ′(u) = 0` on an
//! interval with Neumann ends, where `Φ` is a piecewise-quadratic adhesion
//! potential, together with the scalar hybrid ODE obtained for spatially
//! uniform data.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod energy;
pub mod error;
pub mod ode;
pub mod pde;
pub mod potential;

pub use error::{Error, Result};
pub use potential::PotentialParams;
