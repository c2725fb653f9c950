//! Refined arithmetic-geometric mean inequalities for positive scalars and
//! positive definite matrices, with seeded verification campaigns.
//!
//! Layers, bottom up:
//!
//! - [`scalar_means`]: scalar means and refinement factors.
//! - [`matcore`]: symmetric matrices, Jacobi eigensolver, Loewner order.
//! - [`opmeans`]: the matrix geometric mean and the refined operator bounds.
//! - [`posmaps`]: unital positive linear maps.
//! - [`hypgen`]: seeded instances satisfying each hypothesis chain.
//! - [`checks`]: one verifier per inequality, plus a falsifier.
//! - [`campaign`]: campaign runner, reports and replay.

pub mod campaign;
pub mod checks;
pub mod error;
pub mod hypgen;
pub mod matcore;
pub mod opmeans;
pub mod posmaps;
pub mod rng;
pub mod scalar_means;

pub use error::{Error, Result};
pub use matcore::{SpectralDecomp, SymMatrix, UnitVector};
