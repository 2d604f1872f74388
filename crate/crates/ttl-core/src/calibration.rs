//! Finite-sample test calibration.
//!
//! Three routes produce a rejection threshold with a proven type-I
//! guarantee:
//!
//! * envelope calibration: one-sided Chebyshev on the deterministic
//!   mean/variance envelopes, threshold = sup-mean + sqrt(sup-var/alpha);
//! * worst-case Monte Carlo: empirical (1-alpha)-quantile of the
//!   statistic maximized over a finite set of null signal candidates;
//! * estimation-based: compare a norm estimator against
//!   eps0 + sqrt(phi/alpha), where phi bounds the estimator's worst-case
//!   mean squared error.
//!
//! A test can also run in the equivalence direction, where the roles of
//! the hypotheses swap: the test rejects "far" (||v||_p >= eps1) in favor
//! of "close", controlling the probability of falsely claiming closeness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{draw_gaussian, norm_lp, HypothesisPair, RandomStream};
use crate::statistics::{envelope, statistic_value, tv_plugin_statistic, StatisticKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    CantelliEnvelope,
    McWorstCase,
    EstimationBased,
}

/// Which separation the test rejects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Reject closeness: large statistic is evidence for ||v||_p >= eps1.
    Detection,
    /// Reject farness: small statistic is evidence for ||v||_p <= eps0.
    Equivalence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestSpec {
    pub hypothesis: HypothesisPair,
    pub statistic_kind: StatisticKind,
    pub alpha: f64,
    pub beta: f64,
    pub calibration: Calibration,
    pub direction: Direction,
    /// Monte Carlo repetitions for worst-case calibration.
    pub mc_reps: usize,
    /// Null signal candidates for worst-case calibration; empty means use
    /// the default spread/spike/sqrt(d)-sparse family.
    pub null_candidates: Vec<Vec<f64>>,
}

impl TestSpec {
    pub fn new(hypothesis: HypothesisPair, statistic_kind: StatisticKind, alpha: f64, beta: f64) -> Self {
        TestSpec {
            hypothesis,
            statistic_kind,
            alpha,
            beta,
            calibration: Calibration::CantelliEnvelope,
            direction: Direction::Detection,
            mc_reps: 2000,
            null_candidates: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hypothesis.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0 - self.alpha) {
            return Err(Error::invalid(format!(
                "beta must lie in (0, 1 - alpha), got beta = {}, alpha = {}",
                self.beta, self.alpha
            )));
        }
        if self.calibration == Calibration::McWorstCase && self.mc_reps < 100 {
            return Err(Error::invalid(format!(
                "worst-case Monte Carlo needs mc_reps >= 100, got {}",
                self.mc_reps
            )));
        }
        Ok(())
    }
}

/// Outcome of a single test run. The invariant `reject == (statistic_value
/// > threshold)` holds for every direction; equivalence runs store the
/// negated statistic and negated threshold so that the same inequality
/// expresses "statistic fell below the equivalence cutoff".
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TestDecision {
    pub reject: bool,
    pub statistic_value: f64,
    pub threshold: f64,
    /// Conservative (Chebyshev-type) upper bound on the p-value; 1 when
    /// the statistic is on the accept side of the null envelope.
    pub p_value_upper: f64,
}

fn decision(value: f64, threshold: f64, p_value_upper: f64) -> TestDecision {
    TestDecision {
        reject: value > threshold,
        statistic_value: value,
        threshold,
        p_value_upper: p_value_upper.clamp(0.0, 1.0),
    }
}

/// Observation fed to `run_test`.
#[derive(Clone, Copy, Debug)]
pub enum TestData<'a> {
    Gaussian { x: &'a [f64], sigma: f64 },
    /// Count data: the hypothesis radii are read as total-variation
    /// distances to the reference cell masses.
    Multinomial { counts: &'a [u64], n: u64, reference: &'a [f64] },
}

/// One-sided Chebyshev (Cantelli) quantile bound: for any distribution
/// with the given mean and variance, P(X >= mean + sqrt(var (1-a)/a)) <= a.
pub fn cantelli_quantile_bound(mean: f64, variance: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(variance >= 0.0) || !variance.is_finite() || !mean.is_finite() {
        return Err(Error::invalid("cantelli bound needs finite mean and nonnegative variance"));
    }
    Ok(mean + (variance * (1.0 - alpha) / alpha).sqrt())
}

/// Effective p = 2 radius of the null ball for the chi-squared statistic
/// under an l_p hypothesis: ||v||_2 <= ||v||_p for p <= 2, so the l_p
/// ball of radius eps0 sits inside the l_2 ball of the same radius.
fn chi2_effective_radius(p: f64, eps0: f64) -> Result<f64> {
    if p > 2.0 {
        return Err(Error::invalid(
            "chi-squared statistic has no valid l_2 envelope for p > 2 hypotheses",
        ));
    }
    Ok(eps0)
}

/// Envelope threshold for the Gaussian statistic: the plain Chebyshev form
/// sup-mean(eps0) + sqrt(sup-var(eps0) / alpha). By Chebyshev's
/// inequality the null rejection probability is at most alpha for every
/// v with ||v||_p <= eps0, because the envelopes are nondecreasing in the
/// radius and hence maximal at eps0.
pub fn chebyshev_threshold(
    kind: StatisticKind,
    p: f64,
    sigma: f64,
    d: usize,
    eps0: f64,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let (env_p, radius) = match kind {
        StatisticKind::Chi2 => (2.0, chi2_effective_radius(p, eps0)?),
        _ => (p, eps0),
    };
    #[cfg(debug_assertions)]
    {
        // The validity argument leans on radius-monotonicity of the
        // envelopes; spot-check it on a 16-point grid.
        let mut prev = -f64::INFINITY;
        for i in 0..=16 {
            let rho = radius * i as f64 / 16.0;
            let e = envelope(env_p, sigma, d, rho)?;
            let t = e.mean_upper + (e.var_upper / alpha).sqrt();
            debug_assert!(t >= prev - 1e-9, "envelope threshold not monotone at rho = {rho}");
            prev = t;
        }
    }
    let e = envelope(env_p, sigma, d, radius)?;
    Ok(e.mean_upper + (e.var_upper / alpha).sqrt())
}

/// Default null candidates for worst-case Monte Carlo calibration: the
/// uniform spread, the single spike, and a sqrt(d)-sparse spike, all on
/// the null boundary ||v||_p = eps0.
pub fn default_null_candidates(p: f64, d: usize, eps0: f64) -> Vec<Vec<f64>> {
    if eps0 == 0.0 {
        return vec![vec![0.0; d]];
    }
    let mut cands = Vec::new();
    let spread = vec![eps0 * (d as f64).powf(-1.0 / p); d];
    cands.push(spread);
    let mut spike = vec![0.0; d];
    spike[0] = eps0;
    cands.push(spike);
    let k = (d as f64).sqrt().round().max(1.0) as usize;
    if k > 1 && k < d {
        let mut sparse = vec![0.0; d];
        let mag = eps0 * (k as f64).powf(-1.0 / p);
        for s in sparse.iter_mut().take(k) {
            *s = mag;
        }
        cands.push(sparse);
    }
    cands
}

/// k-th order statistic rule for an upper empirical quantile:
/// k = ceil((1 - alpha) n), 1-based.
// k-th order statistic with k = ceil((1-alpha)(n+1)): for a fresh
// exchangeable draw, P(T_new > T_(k)) = (n+1-k)/(n+1) <= alpha, so the
// calibrated test's level is at most alpha exactly, not just in the
// n -> infinity limit. The naive k = ceil((1-alpha) n) lands one rank
// lower and its level overshoots alpha by ~1/n.
fn empirical_upper_quantile(mut values: Vec<f64>, alpha: f64) -> f64 {
    let n = values.len();
    assert!(n > 0);
    values.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    let k = ((1.0 - alpha) * (n + 1) as f64).ceil() as usize;
    values[k.clamp(1, n) - 1]
}

/// Worst-case Monte Carlo threshold: simulate the statistic under each
/// null candidate and take the largest empirical (1-alpha)-quantile.
/// Reproducible: rep r of candidate c uses the derived stream (c, r)
/// regardless of thread scheduling.
pub fn mc_worst_case_threshold(
    spec: &TestSpec,
    d: usize,
    sigma: f64,
    stream: &RandomStream,
) -> Result<f64> {
    spec.validate()?;
    let p = spec.hypothesis.p;
    let eps0 = spec.hypothesis.eps0;
    let candidates = if spec.null_candidates.is_empty() {
        default_null_candidates(p, d, eps0)
    } else {
        spec.null_candidates.clone()
    };
    let mut best = -f64::INFINITY;
    for (ci, cand) in candidates.iter().enumerate() {
        if cand.len() != d {
            return Err(Error::invalid(format!(
                "null candidate {ci} has length {} but d = {d}",
                cand.len()
            )));
        }
        let norm = norm_lp(cand, p);
        if norm > eps0 * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::invalid(format!(
                "null candidate {ci} has ||v||_p = {norm} > eps0 = {eps0}"
            )));
        }
        let stats: Result<Vec<f64>> = (0..spec.mc_reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream.substream(ci as u64, r as u64).rng();
                let x = draw_gaussian(cand, sigma, &mut rng);
                statistic_value(spec.statistic_kind, &x, p, sigma)
            })
            .collect();
        let q = empirical_upper_quantile(stats?, spec.alpha);
        if q > best {
            best = q;
        }
    }
    Ok(best)
}

/// Worst-case MSE bound for the l_1 plugin statistic as an estimator of
/// ||v||_1: variance <= d sigma^2 and bias <= d sigma mu_1 give
/// E(T - ||v||_1)^2 <= (2/pi + 1) sigma^2 d^2.
pub fn phi_for_l1_plugin(sigma: f64, d: usize) -> f64 {
    (2.0 / std::f64::consts::PI + 1.0) * sigma * sigma * (d as f64) * (d as f64)
}

/// Worst-case MSE bound for the empirical TV distance from n multinomial
/// draws over d cells: E[V(F_hat, G)^2] <= d / (4n).
pub fn phi_for_tv(d: usize, n: u64) -> f64 {
    d as f64 / (4.0 * n as f64)
}

/// Estimation-based test: given a norm estimate with worst-case MSE phi,
/// reject closeness when the estimate exceeds eps0 + sqrt(phi/alpha).
/// Chebyshev gives null level alpha directly.
pub fn estimation_based_test(value: f64, eps0: f64, phi: f64, alpha: f64) -> Result<TestDecision> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(phi >= 0.0) || !phi.is_finite() {
        return Err(Error::invalid(format!("phi must be finite and nonnegative, got {phi}")));
    }
    let threshold = eps0 + (phi / alpha).sqrt();
    let p_value = if value > eps0 { (phi / ((value - eps0) * (value - eps0))).min(1.0) } else { 1.0 };
    Ok(decision(value, threshold, p_value))
}

fn gaussian_detection(
    spec: &TestSpec,
    x: &[f64],
    sigma: f64,
    stream: &RandomStream,
) -> Result<TestDecision> {
    let p = spec.hypothesis.p;
    let eps0 = spec.hypothesis.eps0;
    let d = x.len();
    let value = statistic_value(spec.statistic_kind, x, p, sigma)?;
    let threshold = match spec.calibration {
        Calibration::CantelliEnvelope => {
            chebyshev_threshold(spec.statistic_kind, p, sigma, d, eps0, spec.alpha)?
        }
        Calibration::McWorstCase => mc_worst_case_threshold(spec, d, sigma, stream)?,
        Calibration::EstimationBased => {
            if p != 1.0 || spec.statistic_kind != StatisticKind::PluginLp {
                return Err(Error::invalid(
                    "estimation-based calibration on Gaussian data is defined for the p = 1 plugin statistic",
                ));
            }
            return estimation_based_test(value, eps0, phi_for_l1_plugin(sigma, d), spec.alpha);
        }
    };
    // Conservative p-value from the null envelope, whatever produced the
    // threshold: P_0(T >= t) <= var_upper / (t - mean_upper)^2.
    let (env_p, radius) = match spec.statistic_kind {
        StatisticKind::Chi2 => (2.0, chi2_effective_radius(p, eps0)?),
        _ => (p, eps0),
    };
    let e = envelope(env_p, sigma, d, radius)?;
    let p_value = if value > e.mean_upper {
        (e.var_upper / ((value - e.mean_upper) * (value - e.mean_upper))).min(1.0)
    } else {
        1.0
    };
    Ok(decision(value, threshold, p_value))
}

fn gaussian_equivalence(spec: &TestSpec, x: &[f64], sigma: f64) -> Result<TestDecision> {
    if spec.calibration != Calibration::CantelliEnvelope {
        return Err(Error::invalid(
            "equivalence direction is calibrated from envelopes; other calibrations are not supported",
        ));
    }
    let p = spec.hypothesis.p;
    let eps1 = spec.hypothesis.eps1;
    let d = x.len();
    if spec.statistic_kind == StatisticKind::Chi2 && p != 2.0 {
        return Err(Error::invalid("equivalence with the chi-squared statistic needs p = 2"));
    }
    let value = statistic_value(spec.statistic_kind, x, p, sigma)?;
    // Reject farness when T falls below the smallest value the far
    // hypothesis can plausibly produce: inf-mean(eps1) - sqrt(sup-var/alpha).
    // Chebyshev bounds the false-closeness claim by alpha for every v
    // with ||v||_p >= eps1 (the mean lower envelope is nondecreasing in
    // the radius, so eps1 is the least favorable case).
    let e = envelope(p, sigma, d, eps1)?;
    let t_inf = e.mean_lower - (e.var_upper / spec.alpha).sqrt();
    let p_value = if value < e.mean_lower {
        (e.var_upper / ((e.mean_lower - value) * (e.mean_lower - value))).min(1.0)
    } else {
        1.0
    };
    // Same reject <=> value > threshold convention as detection: store
    // the negated statistic and cutoff.
    Ok(decision(-value, -t_inf, p_value))
}

/// Runs the specified test on one observation.
pub fn run_test(spec: &TestSpec, data: &TestData, stream: &RandomStream) -> Result<TestDecision> {
    spec.validate()?;
    match (data, spec.direction) {
        (TestData::Gaussian { x, sigma }, Direction::Detection) => {
            gaussian_detection(spec, x, *sigma, stream)
        }
        (TestData::Gaussian { x, sigma }, Direction::Equivalence) => {
            gaussian_equivalence(spec, x, *sigma)
        }
        (TestData::Multinomial { counts, n, reference }, Direction::Detection) => {
            if spec.calibration != Calibration::EstimationBased {
                return Err(Error::invalid(
                    "count data is calibrated through the estimation route (phi = d/(4n))",
                ));
            }
            if spec.hypothesis.p != 1.0 {
                return Err(Error::invalid(
                    "count-data hypotheses are total-variation radii; use p = 1",
                ));
            }
            let value = tv_plugin_statistic(counts, *n, reference)?;
            estimation_based_test(value, spec.hypothesis.eps0, phi_for_tv(counts.len(), *n), spec.alpha)
        }
        (TestData::Multinomial { .. }, Direction::Equivalence) => Err(Error::invalid(
            "equivalence direction is implemented for Gaussian sequence data only",
        )),
    }
}

/// Swap the test's direction, exchanging the roles (and error budgets) of
/// the two hypotheses: the flipped test rejects farness with type-I level
/// equal to the original test's type-II target, and vice versa. Flipping
/// twice returns the original spec exactly.
pub fn flip_to_equivalence(spec: &TestSpec) -> TestSpec {
    let mut flipped = spec.clone();
    flipped.direction = match spec.direction {
        Direction::Detection => Direction::Equivalence,
        Direction::Equivalence => Direction::Detection,
    };
    flipped.alpha = spec.beta;
    flipped.beta = spec.alpha;
    flipped
}
