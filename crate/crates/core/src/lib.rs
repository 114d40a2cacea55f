//! Numerical toolkit for partially dissipative hyperbolic systems
//!
//! ```text
//! dZ/dt + sum_k A^k(Z) d_k Z + B Z / eps = 0,   B = diag(0, L2),
//! ```
//!
//! on periodic boxes: symbol and Shizuta-Kawashima analysis, Lyapunov
//! certificates, Littlewood-Paley / hybrid Besov norms, exact linear
//! propagation, a pseudo-spectral nonlinear solver with functional
//! monitoring, decay-rate fitting, and the strong relaxation limit.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod decay_diagnostics;
pub mod error;
pub mod linalg;
pub mod linear_propagator;
pub mod littlewood_paley;
pub mod lyapunov_certificate;
pub mod nonlinear_solver;
pub mod relaxation_limit;
pub mod spectral;
pub mod symbol_analysis;
pub mod system_model;

pub mod cli;

pub use error::{Error, Result};
