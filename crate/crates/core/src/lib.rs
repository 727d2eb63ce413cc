//! Spectral Galerkin simulation of the stochastic nonlinear Schrödinger
//! equation
//!
//! ```text
//! du = (-iAu - iF(u)) dt - i Σ_m B_m u ◇ dL_m
//! ```
//!
//! driven by pure-jump Lévy noise in Marcus canonical form. Each trajectory is
//! integrated on a dyadic Galerkin space `H_n` with a jump-adapted time grid:
//! jumps act through the exact unitary map `exp(-i B_n(l))`, and the drift
//! between jumps is integrated by the implicit midpoint rule or a Strang
//! splitting.
//!
//! Modules:
//! - [`spectral`]: eigenbases, `P_n`, `S_n`, grid transforms, norms
//! - [`nonlinear`]: power nonlinearities and their antiderivative
//! - [`noise`]: intensity measures, Poisson random measure sampling, moments
//! - [`marcus`]: noise matrices, unitary jump maps, the Marcus flow
//! - [`solver`]: the Galerkin SDE integrator
//! - [`diagnostics`]: energy, càdlàg modulus, ensemble statistics
//! - [`ensemble`]: seeded trajectory ensembles, parallel or sequential

pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod marcus;
pub mod noise;
pub mod nonlinear;
mod ode;
pub mod solver;
pub mod spectral;

pub use error::{Result, SnlsError};
pub use num_complex::Complex64;

/// Coefficient vector in a mode basis.
pub type CVector = nalgebra::DVector<Complex64>;
/// Dense complex matrix acting on coefficient vectors.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
