//! Tolerant norm testing in Gaussian sequence and count models.
//!
//! The library tests composite separations of the form
//! "||v||_p <= eps0" against "||v||_p >= eps1" from a single noisy
//! observation, with finite-sample calibration from deterministic
//! mean/variance envelopes or worst-case Monte Carlo. A lower-bounds
//! module constructs moment-matched prior pairs and chi-squared
//! indistinguishability certificates witnessing that a tolerance floor is
//! unavoidable, and a reductions module transports tests between the
//! Gaussian sequence, white-noise regression, density, multinomial, and
//! Poisson models.

pub mod calibration;
pub mod error;
pub mod experiments;
pub mod lower_bounds;
pub mod models;
pub mod num;
pub mod quad;
pub mod reductions;
pub mod statistics;

pub use calibration::{
    flip_to_equivalence, run_test, Calibration, Direction, TestData, TestDecision, TestSpec,
};
pub use error::{Error, Result};
pub use experiments::{
    bisect_critical_separation, chi2_suboptimality_demo, estimate_errors, loglog_slope,
    physics_demo, regime_map, tolerance_factor, BisectionOutcome, Chi2DemoReport, PhysicsReport,
    PowerCurveRow, RegimeLabel, RegimeMapOutput, RegimePoint, SlopeFit, ToleranceFactor,
};
pub use lower_bounds::{
    assemble_certificate, best_poly_approx, chi2_one_dim_bound, chi2_tensorize, feasible_delta,
    free_tolerance_two_point, scaled_mp_value, solve_mp, solve_mp_constrained, two_point_pair,
    verify_certificate, LowerBoundCertificate, MixingPair, PolyApproxResult,
};
pub use models::{
    norm_lp, sample_gaussian_sequence, sample_multinomial, sample_poisson_counts, FunctionSample,
    GaussianSequenceSpec, HypothesisPair, MultinomialSpec, PoissonSpec, RandomStream,
    ReferenceDensity,
};
pub use reductions::{
    bin_white_noise, choose_dimension, depoissonize_poisson_test, histogram_density,
    poissonize_multinomial_test, simulate_white_noise_path, transport_density_test,
    transport_white_noise_test, ReductionSpec,
};
pub use statistics::{
    debiased_statistic, envelope, plugin_statistic, statistic_value, tv_plugin_statistic,
    EnvelopeBounds, StatisticKind,
};
