//! Boundary control of a 1-D reaction-diffusion equation under input delay.
//!
//! The plant is `y_t = y_xx + c(x) y + d(t,x)` on `(0, L)` with `y(t,0) = 0`
//! and delayed Dirichlet actuation `y(t,L) = u(t-D)`. The controlled output
//! is the left Neumann trace `y_x(t,0)`, regulated to a reference signal by
//! a PI structure designed on a spectral truncation of the plant:
//!
//! 1. [`spectral`] diagonalises `∂xx + c(x)` on the Dirichlet domain and
//!    projects data onto the eigenbasis.
//! 2. [`model`] assembles the finite-dimensional design model, augmented by
//!    the control integrator and the tracking integrator, together with the
//!    convergent tail constants of the neglected modes.
//! 3. [`control`] tests controllability, places the closed-loop poles on the
//!    delay-compensated pair and produces a Lyapunov certificate
//!    `(K, P, M, kappa)` for the closed loop.
//! 4. [`predictor`] maintains the control history and evaluates the Artstein
//!    state transform and the resulting predictor feedback.
//! 5. [`sim`] integrates the closed-loop modal system, computes equilibria
//!    and checks the certified decay along trajectories.
//!
//! The crate is `no_std` (with `alloc`); all I/O, configuration and file
//! formats live in the companion CLI crate.

#![no_std]
#![deny(unsafe_code)]
// `!(x > 0.0)` deliberately rejects NaN alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index-based loops mirror the j-indexed mode arithmetic they implement
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod control;
pub mod error;
mod float;
pub mod mesh;
pub mod model;
pub mod predictor;
pub mod signal;
pub mod sim;
pub mod spectral;
mod tridiag;

pub use error::CoreError;
