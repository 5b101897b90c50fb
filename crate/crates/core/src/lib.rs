//! Bregman-iterated total-variation regularization for linear ill-posed
//! inverse problems `v = Tu + noise`.
//!
//! The crate is `no_std` (it needs `alloc`). It provides:
//!
//! - [`operators`]: the anisotropic discrete gradient `D`, its exact adjoint,
//!   the TV functional `J(u) = ‖Du‖₁` and BV utilities.
//! - [`proximal`]: projections onto the nonnegative orthant and the ℓ∞ unit
//!   ball, plus a checker for the prox-update inequality.
//! - [`forward`]: the [`LinearOperator`] abstraction with dense and
//!   parallel-beam Radon implementations, power-iteration norm estimates and
//!   exact-level noise injection.
//! - [`regularization`]: index functions, Bregman distances, the penalized
//!   objective, discrepancy-principle bands and parameter-bound diagnostics.
//! - [`solver`]: the nested primal-dual iteration with convex extrapolation.
//! - [`oracle`]: brute-force validators (dense matrices, lattice searches,
//!   Jacobi eigenvalues) used by the test suites.
//!
//! [`LinearOperator`]: forward::LinearOperator
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod forward;
pub mod linalg;
pub mod operators;
pub mod oracle;
pub mod proximal;
pub mod regularization;
pub mod solver;

pub use error::{Error, Result};
pub use forward::{DenseOperator, LinearOperator, NoisyMeasurement, RadonOperator, Sinogram};
pub use operators::{DualField, Grid, ImageVector};
pub use regularization::{IndexFunction, MdpBand, MdpConfig};
pub use solver::{RunTrace, SolverConfig, Stopping, Termination};
