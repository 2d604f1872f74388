//! Reference numerics for cross-checking the main library.
//!
//! Everything here is deliberately implemented by a *different* route than
//! the corresponding production code: integrals use adaptive Simpson on a
//! truncated domain instead of Gauss–Hermite rules, best polynomial
//! approximation uses a Remez exchange instead of a linear program, and
//! moment sums use error-free transformations instead of plain summation.
//! Test suites freeze values produced by these routines and compare the
//! production implementations against them.

pub mod chi2;
pub mod dd;
pub mod quad;
pub mod remez;

pub use chi2::chi2_mixtures_1d;
pub use dd::{dot_dd, sum_neumaier};
pub use quad::{adaptive_simpson, gauss_expectation};
pub use remez::best_abs_pow_approx;
