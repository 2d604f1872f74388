//! Monte Carlo measurement of test errors, empirical critical-separation
//! search, regime mapping, the chi-squared suboptimality demonstration,
//! and tolerance-factor inversion.
//!
//! Every operation takes a [`RandomStream`] and derives per-replication
//! substreams from it, so results are reproducible bit for bit under any
//! thread schedule: replication draws depend only on (seed, tag, rep),
//! and aggregation is a sum of integer reject counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    chebyshev_threshold, default_null_candidates, estimation_based_test, mc_worst_case_threshold,
    phi_for_l1_plugin, phi_for_tv, Calibration, Direction, TestDecision, TestSpec,
};
use crate::error::{Error, Result};
use crate::models::{draw_gaussian, HypothesisPair, RandomStream};
use crate::statistics::{envelope, statistic_value, tv_plugin_statistic, StatisticKind};

// Substream tag spaces. Calibration quantiles, null-rate draws, and
// alternative-power draws must never share a (tag, rep) pair; the
// alternative tags are additionally fixed across bisection iterations so
// that power curves use common random numbers.
const TAG_CALIBRATE: u64 = 1 << 40;
const TAG_NULL: u64 = 1 << 41;
const TAG_ALT: u64 = 1 << 42;
const TAG_POINT: u64 = 1 << 43;

/// One measured operating point of a test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCurveRow {
    pub eps0: f64,
    pub eps1: f64,
    pub d: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub n_reps: usize,
    pub empirical_type1: f64,
    pub empirical_power: f64,
    /// Binomial standard error sqrt(r (1 - r) / n_reps) of the power
    /// estimate.
    pub mc_stderr: f64,
    pub seed: u64,
}

/// sqrt(r (1 - r) / n): standard error of an empirical rate.
pub fn binomial_stderr(rate: f64, n_reps: usize) -> f64 {
    (rate * (1.0 - rate) / n_reps as f64).sqrt()
}

/// A test with all calibration work done up front: replication loops
/// only draw data and evaluate the statistic against a fixed cutoff.
#[derive(Clone, Copy, Debug)]
struct FrozenTest {
    kind: StatisticKind,
    p: f64,
    sigma: f64,
    threshold: f64,
    reject_below: bool,
}

impl FrozenTest {
    fn from_spec(spec: &TestSpec, d: usize, sigma: f64, stream: &RandomStream) -> Result<Self> {
        spec.validate()?;
        let p = spec.hypothesis.p;
        match spec.direction {
            Direction::Detection => {
                let threshold = match spec.calibration {
                    Calibration::CantelliEnvelope => {
                        chebyshev_threshold(spec.statistic_kind, p, sigma, d, spec.hypothesis.eps0, spec.alpha)?
                    }
                    Calibration::McWorstCase => {
                        mc_worst_case_threshold(spec, d, sigma, &stream.substream(TAG_CALIBRATE, 0))?
                    }
                    Calibration::EstimationBased => {
                        if p != 1.0 || spec.statistic_kind != StatisticKind::PluginLp {
                            return Err(Error::invalid(
                                "estimation-based calibration on Gaussian data is defined for the p = 1 plugin statistic",
                            ));
                        }
                        spec.hypothesis.eps0 + (phi_for_l1_plugin(sigma, d) / spec.alpha).sqrt()
                    }
                };
                Ok(FrozenTest { kind: spec.statistic_kind, p, sigma, threshold, reject_below: false })
            }
            Direction::Equivalence => {
                if spec.calibration != Calibration::CantelliEnvelope {
                    return Err(Error::invalid(
                        "equivalence direction is calibrated from envelopes; other calibrations are not supported",
                    ));
                }
                if spec.statistic_kind == StatisticKind::Chi2 && p != 2.0 {
                    return Err(Error::invalid("equivalence with the chi-squared statistic needs p = 2"));
                }
                // Reject farness when the statistic falls below the
                // smallest value plausible at radius eps1.
                let e = envelope(p, sigma, d, spec.hypothesis.eps1)?;
                let threshold = e.mean_lower - (e.var_upper / spec.alpha).sqrt();
                Ok(FrozenTest { kind: spec.statistic_kind, p, sigma, threshold, reject_below: true })
            }
        }
    }

    fn rejects(&self, x: &[f64]) -> Result<bool> {
        let value = statistic_value(self.kind, x, self.p, self.sigma)?;
        Ok(if self.reject_below { value < self.threshold } else { value > self.threshold })
    }
}

/// Rejection rate over n_reps draws of X ~ N(v, sigma^2 I). Replication
/// r uses substream (tag, r), so the same (stream, tag) pair replays the
/// same noise — common random numbers across design points.
fn rejection_rate(
    test: &FrozenTest,
    v: &[f64],
    n_reps: usize,
    stream: &RandomStream,
    tag: u64,
) -> Result<f64> {
    let rejects = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream.substream(tag, rep as u64).rng();
            let x = draw_gaussian(v, test.sigma, &mut rng);
            test.rejects(&x).map(u64::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(rejects as f64 / n_reps as f64)
}

/// Estimates type-I and type-II error rates of a test at caller-chosen
/// signal pairs. Each generator pair supplies one vector drawn under the
/// null for the type-I column and one alternative for the power column;
/// the threshold is calibrated once and shared by every replication.
pub fn estimate_errors(
    spec: &TestSpec,
    d: usize,
    sigma: f64,
    generators: &[(Vec<f64>, Vec<f64>)],
    n_reps: usize,
    stream: &RandomStream,
) -> Result<Vec<PowerCurveRow>> {
    if n_reps < 100 {
        return Err(Error::invalid(format!("error estimation needs n_reps >= 100, got {n_reps}")));
    }
    if generators.is_empty() {
        return Err(Error::invalid("no generator pairs supplied"));
    }
    let test = FrozenTest::from_spec(spec, d, sigma, stream)?;
    let mut rows = Vec::with_capacity(generators.len());
    for (gi, (null_v, alt_v)) in generators.iter().enumerate() {
        if null_v.len() != d || alt_v.len() != d {
            return Err(Error::invalid(format!(
                "generator {gi} has lengths {} and {} but d = {d}",
                null_v.len(),
                alt_v.len()
            )));
        }
        let type1 = rejection_rate(&test, null_v, n_reps, stream, TAG_NULL + gi as u64)?;
        let power = rejection_rate(&test, alt_v, n_reps, stream, TAG_ALT + gi as u64)?;
        rows.push(PowerCurveRow {
            eps0: spec.hypothesis.eps0,
            eps1: spec.hypothesis.eps1,
            d,
            sigma,
            alpha: spec.alpha,
            n_reps,
            empirical_type1: type1,
            empirical_power: power,
            mc_stderr: binomial_stderr(power, n_reps),
            seed: stream.master_seed,
        });
    }
    Ok(rows)
}

/// Result of the critical-separation bisection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BisectionOutcome {
    /// Smallest eps1 - eps0 at which the worst candidate alternative
    /// reaches power 1 - beta (final bisection midpoint).
    pub critical_sep: f64,
    /// One row per power evaluation, sorted by eps1.
    pub trace: Vec<PowerCurveRow>,
    /// Power along the trace is nondecreasing in eps1 up to twice the
    /// combined standard errors; a false value flags a run whose noise
    /// or test family broke the monotonicity assumption.
    pub monotone_ok: bool,
}

// Alternatives on the sphere ||v||_p = eps1 used for the worst-of-candidates
// power: the uniform spread vector and the single spike. These are the two
// extremal shapes: spread minimizes (and spike maximizes) every l_q norm with
// q > p among vectors of fixed l_p norm.
fn alternative_candidates(p: f64, d: usize, eps1: f64) -> Vec<Vec<f64>> {
    let spread = vec![eps1 * (d as f64).powf(-1.0 / p); d];
    let mut spike = vec![0.0; d];
    spike[0] = eps1;
    vec![spread, spike]
}

/// Bisects for the smallest separation eps1 - eps0 at which the frozen
/// test family reaches power 1 - beta against the worst of the spread and
/// spike alternatives. The template's eps1 field is ignored: the family
/// is indexed by the alternative radius, while the threshold depends only
/// on (eps0, d, sigma) and is calibrated once. Per-replication noise is
/// shared across the bisection (common random numbers), and each
/// evaluation is recorded as a trace row.
pub fn bisect_critical_separation(
    template: &TestSpec,
    d: usize,
    sigma: f64,
    n_reps: usize,
    bracket_hi: Option<f64>,
    stream: &RandomStream,
) -> Result<BisectionOutcome> {
    if template.direction != Direction::Detection {
        return Err(Error::invalid("critical-separation search runs the detection direction"));
    }
    if n_reps < 100 {
        return Err(Error::invalid(format!("critical-separation search needs n_reps >= 100, got {n_reps}")));
    }
    let test = FrozenTest::from_spec(template, d, sigma, stream)?;
    let p = template.hypothesis.p;
    let eps0 = template.hypothesis.eps0;
    let target = 1.0 - template.beta;

    // Null rejection rate (worst candidate), recorded into every row.
    let mut type1 = 0.0f64;
    for (ci, cand) in default_null_candidates(p, d, eps0).iter().enumerate() {
        type1 = type1.max(rejection_rate(&test, cand, n_reps, stream, TAG_NULL + ci as u64)?);
    }

    let worst_power = |eps1: f64| -> Result<f64> {
        let mut worst = 1.0f64;
        for (ci, cand) in alternative_candidates(p, d, eps1).iter().enumerate() {
            worst = worst.min(rejection_rate(&test, cand, n_reps, stream, TAG_ALT + ci as u64)?);
        }
        Ok(worst)
    };

    let hi0 = bracket_hi.unwrap_or(eps0 + 8.0 * sigma * (d as f64).powf(0.75));
    if !(hi0 > eps0) || !hi0.is_finite() {
        return Err(Error::invalid(format!(
            "bracket upper bound must be finite and exceed eps0 = {eps0}, got {hi0}"
        )));
    }

    let seed = stream.master_seed;
    let mut trace: Vec<PowerCurveRow> = Vec::with_capacity(13);
    let record = |eps1: f64, power: f64, trace: &mut Vec<PowerCurveRow>| {
        trace.push(PowerCurveRow {
            eps0,
            eps1,
            d,
            sigma,
            alpha: template.alpha,
            n_reps,
            empirical_type1: type1,
            empirical_power: power,
            mc_stderr: binomial_stderr(power, n_reps),
            seed,
        });
    };

    let hi_power = worst_power(hi0)?;
    record(hi0, hi_power, &mut trace);
    if hi_power < target {
        return Err(Error::Bracket(format!(
            "worst-candidate power {hi_power:.4} at the bracket top eps1 = {hi0:.6e} is below the target {target:.4}"
        )));
    }

    let (mut lo, mut hi) = (eps0, hi0);
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        let power = worst_power(mid)?;
        record(mid, power, &mut trace);
        if power >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    trace.sort_by(|a, b| a.eps1.partial_cmp(&b.eps1).expect("radii are finite"));
    let monotone_ok = trace.windows(2).all(|w| {
        let slack = 2.0 * w[0].mc_stderr.hypot(w[1].mc_stderr);
        w[1].empirical_power >= w[0].empirical_power - slack
    });

    Ok(BisectionOutcome { critical_sep: 0.5 * (lo + hi) - eps0, trace, monotone_ok })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Free,
    Interpolation,
    FunctionalEstimation,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RegimePoint {
    pub eps0: f64,
    pub empirical_critical_sep: f64,
    /// Separation scale the l_1 theory predicts for this tolerance.
    pub predicted_rate: f64,
    pub regime_label: RegimeLabel,
}

/// l_1 regime boundaries at noise level sigma: tolerances below
/// sigma sqrt(d) cost nothing over the simple null (separation scale
/// sigma d^{3/4}), tolerances in [sigma sqrt(d), sigma d) pay the
/// interpolation premium sqrt(eps0 sigma d), and from sigma d on the
/// problem is as hard as estimating the norm (scale sigma d).
pub fn classify_regime(eps0: f64, d: usize, sigma: f64) -> (RegimeLabel, f64) {
    let df = d as f64;
    if eps0 < sigma * df.sqrt() {
        (RegimeLabel::Free, sigma * df.powf(0.75))
    } else if eps0 < sigma * df {
        (RegimeLabel::Interpolation, (eps0 * sigma * df).sqrt())
    } else {
        (RegimeLabel::FunctionalEstimation, sigma * df)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegimeMapOutput {
    pub points: Vec<RegimePoint>,
    /// Every bisection power evaluation behind the points, concatenated;
    /// rows carry their eps0.
    pub traces: Vec<PowerCurveRow>,
}

/// Sweeps the null tolerance and records the empirical critical
/// separation next to the predicted scale and regime label. The swept
/// family is the l_1 plugin test with worst-case Monte Carlo calibration.
pub fn regime_map(
    p: f64,
    d: usize,
    sigma: f64,
    alpha: f64,
    beta: f64,
    eps0_grid: &[f64],
    n_reps: usize,
    stream: &RandomStream,
) -> Result<RegimeMapOutput> {
    if p != 1.0 {
        return Err(Error::invalid(format!("the regime boundaries are the l_1 ones; got p = {p}")));
    }
    if eps0_grid.is_empty() {
        return Err(Error::invalid("empty eps0 grid"));
    }
    if eps0_grid[0] < 0.0 || eps0_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("eps0 grid must be nonnegative and strictly increasing"));
    }
    let mut points = Vec::with_capacity(eps0_grid.len());
    let mut traces = Vec::new();
    for (i, &eps0) in eps0_grid.iter().enumerate() {
        let pair = HypothesisPair::new(1.0, eps0, eps0 + sigma * (d as f64).powf(0.75))?;
        let mut spec = TestSpec::new(pair, StatisticKind::PluginLp, alpha, beta);
        spec.calibration = Calibration::McWorstCase;
        spec.mc_reps = n_reps;
        let out =
            bisect_critical_separation(&spec, d, sigma, n_reps, None, &stream.substream(TAG_POINT, i as u64))?;
        let (regime_label, predicted_rate) = classify_regime(eps0, d, sigma);
        points.push(RegimePoint {
            eps0,
            empirical_critical_sep: out.critical_sep,
            predicted_rate,
            regime_label,
        });
        traces.extend(out.trace);
    }
    Ok(RegimeMapOutput { points, traces })
}

/// One tolerance setting of the suboptimality demonstration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Chi2DemoRow {
    /// c in eps0 = c sigma d^{1/4}; 0 for the simple-null control row.
    pub tolerance_multiple: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub chi2_threshold: f64,
    pub chi2_power: f64,
    pub chi2_stderr: f64,
    pub plugin_threshold: f64,
    pub plugin_power: f64,
    pub plugin_stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chi2DemoReport {
    pub d: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    /// C in eps1 = C sigma d^{3/4}.
    pub sep_multiple: f64,
    pub n_reps: usize,
    pub seed: u64,
    /// Tolerant rows, eps0 = c sigma d^{1/4} for c in {4, 8, 16}.
    pub rows: Vec<Chi2DemoRow>,
    /// eps0 = 0 control where the chi-squared test is the right tool.
    pub control: Chi2DemoRow,
}

fn chi2_demo_row(
    c: f64,
    eps1: f64,
    alt: &[f64],
    d: usize,
    sigma: f64,
    alpha: f64,
    beta: f64,
    n_reps: usize,
    stream: &RandomStream,
) -> Result<Chi2DemoRow> {
    let eps0 = c * sigma * (d as f64).powf(0.25);
    let pair = HypothesisPair::new(1.0, eps0, eps1)?;

    // Smallest threshold the second-moment envelope certifies as
    // level-alpha for the chi-squared statistic over the l_1 ball: the
    // ball sits inside the l_2 ball of the same radius, so the p = 2
    // envelope at eps0 applies.
    let chi2_threshold = chebyshev_threshold(StatisticKind::Chi2, 1.0, sigma, d, eps0, alpha)?;
    let chi2 = FrozenTest {
        kind: StatisticKind::Chi2,
        p: 1.0,
        sigma,
        threshold: chi2_threshold,
        reject_below: false,
    };

    let mut plugin_spec = TestSpec::new(pair, StatisticKind::PluginLp, alpha, beta);
    plugin_spec.calibration = Calibration::McWorstCase;
    plugin_spec.mc_reps = n_reps;
    let plugin = FrozenTest::from_spec(&plugin_spec, d, sigma, stream)?;

    // One Gaussian draw per replication feeds both statistics; the
    // coupling leaves the two marginal powers unchanged.
    let (chi2_rejects, plugin_rejects) = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream.substream(TAG_ALT, rep as u64).rng();
            let x = draw_gaussian(alt, sigma, &mut rng);
            Ok((u64::from(chi2.rejects(&x)?), u64::from(plugin.rejects(&x)?)))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    let chi2_power = chi2_rejects as f64 / n_reps as f64;
    let plugin_power = plugin_rejects as f64 / n_reps as f64;

    Ok(Chi2DemoRow {
        tolerance_multiple: c,
        eps0,
        eps1,
        chi2_threshold,
        chi2_power,
        chi2_stderr: binomial_stderr(chi2_power, n_reps),
        plugin_threshold: plugin.threshold,
        plugin_power,
        plugin_stderr: binomial_stderr(plugin_power, n_reps),
    })
}

/// Head-to-head power of the chi-squared test and the l_1 plugin test on
/// the spread alternative v = (eps1/d) 1 with eps1 = 4 sigma d^{3/4}. The
/// chi-squared threshold must clear the l_1 spike (eps0, 0, ..., 0) whose
/// squared l_2 norm is eps0^2 = c^2 sigma^2 sqrt(d) — the same order as
/// the alternative's entire mean shift eps1^2/d = 16 sigma^2 sqrt(d) —
/// so for c in the swept range no threshold is simultaneously valid and
/// powerful, while the plugin test keeps full power.
pub fn chi2_suboptimality_demo(
    d: usize,
    sigma: f64,
    alpha: f64,
    beta: f64,
    sep_multiple: f64,
    n_reps: usize,
    stream: &RandomStream,
) -> Result<Chi2DemoReport> {
    if d < 256 {
        return Err(Error::invalid(format!("the demonstration needs d >= 256, got {d}")));
    }
    if n_reps < 100 {
        return Err(Error::invalid(format!("the demonstration needs n_reps >= 100, got {n_reps}")));
    }
    if !(sep_multiple > 0.0) || !sep_multiple.is_finite() {
        return Err(Error::invalid(format!(
            "separation multiple must be positive and finite, got {sep_multiple}"
        )));
    }
    let df = d as f64;
    let eps1 = sep_multiple * sigma * df.powf(0.75);
    let alt = vec![eps1 / df; d];

    let mut rows = Vec::new();
    for (i, &c) in [4.0f64, 8.0, 16.0].iter().enumerate() {
        rows.push(chi2_demo_row(c, eps1, &alt, d, sigma, alpha, beta, n_reps, &stream.substream(TAG_POINT, i as u64))?);
    }
    let control = chi2_demo_row(0.0, eps1, &alt, d, sigma, alpha, beta, n_reps, &stream.substream(TAG_POINT, 3))?;

    Ok(Chi2DemoReport { d, sigma, alpha, beta, sep_multiple, n_reps, seed: stream.master_seed, rows, control })
}

/// Largest tolerance at which the data still reject.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceFactor {
    /// sup { eps : the level-alpha test with null tolerance eps rejects }.
    pub value: f64,
    /// True when the whole bracket rejects; `value` is then only a lower
    /// bound on the supremum.
    pub censored: bool,
}

/// Inverts a monotone family of tests on one data set: `reject_at(eps)`
/// must be nonincreasing in eps (a fixed statistic against a threshold
/// nondecreasing in eps). Bisection to relative width 1e-4; the empty
/// supremum (no rejection even at eps = 0) is 0 by convention.
pub fn tolerance_factor<F>(reject_at: F, bracket_hi: f64) -> Result<ToleranceFactor>
where
    F: Fn(f64) -> Result<bool>,
{
    if !(bracket_hi > 0.0) || !bracket_hi.is_finite() {
        return Err(Error::invalid(format!(
            "bracket_hi must be positive and finite, got {bracket_hi}"
        )));
    }
    if !reject_at(0.0)? {
        return Ok(ToleranceFactor { value: 0.0, censored: false });
    }
    if reject_at(bracket_hi)? {
        return Ok(ToleranceFactor { value: bracket_hi, censored: true });
    }
    let (mut lo, mut hi) = (0.0f64, bracket_hi);
    // 64 halvings overshoot the 1e-4 relative target unless lo stays
    // pinned at 0, in which case the supremum is 0 to working precision.
    for _ in 0..64 {
        if hi - lo <= 1e-4 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if reject_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ToleranceFactor { value: lo, censored: false })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhysicsReport {
    pub d: usize,
    pub n: u64,
    /// Radius of the total-variation ball of acceptable references.
    pub r: f64,
    pub decision: TestDecision,
    /// Largest tolerance at which these counts still reject; doubles as
    /// a level-alpha lower confidence bound on the true distance.
    pub tolerance_factor: f64,
    pub tolerance_censored: bool,
    /// max(d^{1/4}/sqrt(n), d^{1/4} n^{-1/4} sqrt(r)): detectability
    /// floor for the separation, evaluated with constant 1 (annotation
    /// only, not a decision input).
    pub predicted_floor: f64,
    /// r <= 1/sqrt(n): the floor matches the exact-reference floor up to
    /// sqrt(2), so the tolerant null costs no power.
    pub approximation_free: bool,
}

/// Tests observed counts against a total-variation ball of radius r
/// around reference cell masses: the tolerant TV test at eps0 = r, plus
/// the tolerance factor and the predicted detectability floor.
pub fn physics_demo(counts: &[u64], reference: &[f64], n: u64, r: f64, alpha: f64) -> Result<PhysicsReport> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::invalid(format!("tolerance r must be nonnegative and finite, got {r}")));
    }
    let value = tv_plugin_statistic(counts, n, reference)?;
    let d = counts.len();
    let phi = phi_for_tv(d, n);
    let decision = estimation_based_test(value, r, phi, alpha)?;
    // The rejection region { value > eps + sqrt(phi/alpha) } inverts in
    // closed form; the empirical TV distance is at most 1, so the
    // supremum is never censored.
    let eps_star = (value - (phi / alpha).sqrt()).max(0.0);
    let nf = n as f64;
    let df = d as f64;
    let predicted_floor = (df.powf(0.25) / nf.sqrt()).max(df.powf(0.25) * nf.powf(-0.25) * r.sqrt());
    Ok(PhysicsReport {
        d,
        n,
        r,
        decision,
        tolerance_factor: eps_star,
        tolerance_censored: false,
        predicted_floor,
        approximation_free: r <= 1.0 / nf.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual on the log scale.
    pub residual_rms: f64,
}

/// Least-squares slope of ln y against ln x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("slope fit needs at least two (x, y) pairs of equal length"));
    }
    if xs.iter().chain(ys.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("log-log fit needs positive finite data"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("slope fit needs at least two distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    Ok(SlopeFit { slope, intercept, residual_rms: (rss / n).sqrt() })
}
