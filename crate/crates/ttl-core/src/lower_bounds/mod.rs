//! Lower-bound machinery: moment-matched prior pairs, extremal moment
//! problems, chi-squared indistinguishability bounds, and verifiable
//! certificates that a tolerance floor is unavoidable.
//!
//! The central object is a pair of symmetric probability measures
//! (pi_0, pi_1) on [-delta, delta] whose first L moments agree. Mixing
//! d independent copies of N(v_i, sigma^2) with v_i drawn from pi_0 or
//! pi_1 produces two d-dimensional data distributions whose chi-squared
//! divergence is controlled by the moment gap beyond order L, while the
//! p-th absolute moments of the priors can differ a lot -- so the
//! ||v||_p separation between the hypotheses stays large even though the
//! data distributions are nearly indistinguishable.

pub mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{dot_dd, sum_neumaier};
use simplex::{maximize, LpProblem};

/// A pair of finitely supported measures with matched moments.
///
/// `w0` and `w1` are the weights of pi_0 and pi_1 on the shared support;
/// `matched_moments` is the number L of leading moments that agree;
/// `delta` bounds the support radius; `p` records which norm exponent the
/// pair was built to separate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingPair {
    pub support: Vec<f64>,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    #[serde(rename = "L")]
    pub matched_moments: usize,
    pub delta: f64,
    pub p: f64,
}

impl MixingPair {
    pub fn validate(&self) -> Result<()> {
        let n = self.support.len();
        if n == 0 || self.w0.len() != n || self.w1.len() != n {
            return Err(Error::invalid("mixing pair needs equal, nonempty support/weight lengths"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid(format!("support radius delta must be positive, got {}", self.delta)));
        }
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(Error::invalid(format!("pair exponent p must be positive, got {}", self.p)));
        }
        for &s in &self.support {
            if !s.is_finite() || s.abs() > self.delta * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "support point {s} lies outside [-{d}, {d}]",
                    d = self.delta
                )));
            }
        }
        for w in [&self.w0, &self.w1] {
            if w.iter().any(|&x| !x.is_finite() || x < -1e-12) {
                return Err(Error::invalid("weights must be nonnegative"));
            }
            let total = sum_neumaier(w.iter().copied());
            if (total - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("weights sum to {total}, expected 1 within 1e-10")));
            }
        }
        // Moment checks on the delta-normalized support so tolerances are
        // scale-free.
        let normalized: Vec<f64> = self.support.iter().map(|&s| s / self.delta).collect();
        for (name, w) in [("pi0", &self.w0), ("pi1", &self.w1)] {
            let m1 = dot_dd(&normalized, w);
            if m1.abs() > 1e-10 {
                return Err(Error::invalid(format!("first moment of {name} is {m1:.3e}, expected 0 within 1e-10")));
            }
        }
        let mut pw: Vec<f64> = vec![1.0; n];
        for j in 1..=self.matched_moments {
            for (v, &s) in pw.iter_mut().zip(&normalized) {
                *v *= s;
            }
            let _ = j;
            let gap = dot_dd(&pw, &self.w1) - dot_dd(&pw, &self.w0);
            if gap.abs() > 1e-8 {
                return Err(Error::invalid(format!(
                    "moment {j} differs by {gap:.3e}, expected agreement within 1e-8"
                )));
            }
        }
        Ok(())
    }

    /// j-th moment gap E_pi1[(s/delta)^j] - E_pi0[(s/delta)^j], in
    /// double-double accumulation.
    pub fn normalized_moment_gap(&self, j: u32) -> f64 {
        let pw: Vec<f64> = self.support.iter().map(|&s| (s / self.delta).powi(j as i32)).collect();
        let dw: Vec<f64> = self.w1.iter().zip(&self.w0).map(|(&a, &b)| a - b).collect();
        dot_dd(&pw, &dw)
    }

    /// E_pi|s|^p for the selected measure (0 or 1).
    pub fn abs_moment_p(&self, which: usize) -> f64 {
        let w = if which == 0 { &self.w0 } else { &self.w1 };
        let pw: Vec<f64> = self.support.iter().map(|&s| s.abs().powf(self.p)).collect();
        dot_dd(&pw, w)
    }

    /// Var_pi(|s|^p) for the selected measure.
    pub fn abs_moment_p_var(&self, which: usize) -> f64 {
        let w = if which == 0 { &self.w0 } else { &self.w1 };
        let mean = self.abs_moment_p(which);
        let dev: Vec<f64> = self
            .support
            .iter()
            .map(|&s| {
                let t = s.abs().powf(self.p) - mean;
                t * t
            })
            .collect();
        dot_dd(&dev, w).max(0.0)
    }

    /// Rescale the support by c (delta scales along).
    pub fn scale(&self, c: f64) -> MixingPair {
        MixingPair {
            support: self.support.iter().map(|&s| c * s).collect(),
            w0: self.w0.clone(),
            w1: self.w1.clone(),
            matched_moments: self.matched_moments,
            delta: self.delta * c,
            p: self.p,
        }
    }
}

/// Shifted Chebyshev polynomial T_i(2t - 1) on [0, 1].
fn shifted_cheb(i: usize, t: f64) -> f64 {
    let x = 2.0 * t - 1.0;
    match i {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0;
            let mut cur = x;
            for _ in 1..i {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Series sum_{i} coeffs[i] T_i(2t - 1) by the backward recurrence.
fn shifted_cheb_series(coeffs: &[f64], t: f64) -> f64 {
    let x = 2.0 * t - 1.0;
    let mut b1 = 0.0f64;
    let mut b2 = 0.0f64;
    for &c in coeffs.iter().rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    // b1 = sum c_i T_i + x b2 correction: undo the doubled zeroth term.
    b1 - x * b2
}

pub fn default_grid_size(l: usize) -> usize {
    (16 * l).max(512)
}

/// Chebyshev-distributed grid on [0, 1] with endpoints, clustering at
/// both ends.
fn cheb_t_grid(k: usize) -> Vec<f64> {
    (0..k)
        .map(|j| 0.5 * (1.0 - (j as f64 * std::f64::consts::PI / (k - 1) as f64).cos()))
        .collect()
}

struct FoldedLp {
    t: Vec<f64>,
    n_mom: usize,
}

impl FoldedLp {
    /// Column entries shared by the unconstrained and constrained
    /// problems: mass rows for each measure and moment-matching rows in
    /// the shifted Chebyshev basis of t = s^2 (even moments of s).
    fn fill(&self, j: usize, out: &mut [f64], extra_row: bool, p: f64) {
        let k = self.t.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < k {
            let t = self.t[j];
            out[0] = 1.0;
            for i in 1..=self.n_mom {
                out[1 + i] = shifted_cheb(i, t);
            }
        } else if j < 2 * k {
            let t = self.t[j - k];
            out[1] = 1.0;
            for i in 1..=self.n_mom {
                out[1 + i] = -shifted_cheb(i, t);
            }
            if extra_row {
                out[2 + self.n_mom] = t.powf(0.5 * p);
            }
        } else {
            // Slack of the E_pi0 |v|^p <= eps^p row.
            out[2 + self.n_mom] = 1.0;
        }
    }
}

/// Turn an optimal folded solution into a symmetric pair on [-1, 1].
fn unfold_pair(
    t: &[f64],
    basis: &[usize],
    x_basic: &[f64],
    k: usize,
    l: usize,
    p: f64,
) -> Result<MixingPair> {
    let mut folded0 = vec![0.0f64; k];
    let mut folded1 = vec![0.0f64; k];
    for (&j, &v) in basis.iter().zip(x_basic) {
        if j < k {
            folded1[j] += v;
        } else if j < 2 * k {
            folded0[j - k] += v;
        }
    }
    let mut support = Vec::new();
    let mut w0 = Vec::new();
    let mut w1 = Vec::new();
    for j in 0..k {
        // x_basic may carry -1e-9-scale round-off; clamp before use.
        let (a0, a1) = (folded0[j].max(0.0), folded1[j].max(0.0));
        if a0 < 1e-14 && a1 < 1e-14 {
            continue;
        }
        let s = t[j].sqrt();
        if s < 1e-15 {
            support.push(0.0);
            w0.push(a0);
            w1.push(a1);
        } else {
            support.push(-s);
            w0.push(0.5 * a0);
            w1.push(0.5 * a1);
            support.push(s);
            w0.push(0.5 * a0);
            w1.push(0.5 * a1);
        }
    }
    // LP round-off leaves the masses within ~1e-12 of one; renormalize so
    // downstream weight-sum checks are exact.
    for w in [&mut w0, &mut w1] {
        let total = sum_neumaier(w.iter().copied());
        if total <= 0.0 {
            return Err(Error::Convergence("optimal measure lost all mass".into()));
        }
        for v in w.iter_mut() {
            *v /= total;
        }
    }
    let pair = MixingPair { support, w0, w1, matched_moments: l, delta: 1.0, p };
    pair.validate()?;
    Ok(pair)
}

fn check_mp_inputs(p: f64, l: usize, grid_size: usize) -> Result<()> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!("moment problem needs finite p > 0, got {p}")));
    }
    if l == 0 {
        return Err(Error::invalid("moment problem needs at least one matched moment"));
    }
    if grid_size < 8 * l {
        return Err(Error::invalid(format!(
            "grid_size = {grid_size} too coarse for L = {l}; need at least 8 L"
        )));
    }
    Ok(())
}

/// Extremal moment problem on [-1, 1]:
///   M_p(L) = sup E_pi1 |v|^p - E_pi0 |v|^p
/// over probability measures with matching moments 1..L. By symmetry the
/// optimum is attained by symmetric measures, so the problem folds to
/// t = v^2 in [0, 1] with only the even moments (expressed in the shifted
/// Chebyshev basis for conditioning) constrained. Returns the optimal
/// value together with an optimal pair.
pub fn solve_mp(p: f64, l: usize, grid_size: usize) -> Result<(f64, MixingPair)> {
    check_mp_inputs(p, l, grid_size)?;
    let k = grid_size / 2 + 1;
    let t = cheb_t_grid(k);
    let n_mom = l / 2;
    let rows = 2 + n_mom;
    let mut b = vec![0.0; rows];
    b[0] = 1.0;
    b[1] = 1.0;
    let lp = FoldedLp { t: t.clone(), n_mom };
    let prob = LpProblem {
        rows,
        cols: 2 * k,
        b,
        col: Box::new(|j, out| lp.fill(j, out, false, p)),
        cost: Box::new(|j| {
            if j < k {
                t[j].powf(0.5 * p)
            } else {
                -t[j - k].powf(0.5 * p)
            }
        }),
    };
    let sol = maximize(&prob, 50_000)?;
    let pair = unfold_pair(&t, &sol.basis, &sol.x_basic, k, l, p)?;
    Ok((sol.value, pair))
}

/// Constrained variant M_p(eps, L): additionally requires
/// E_pi0 |v|^p <= eps^p. `eps` is in the normalized units of the [-1, 1]
/// support.
pub fn solve_mp_constrained(p: f64, eps: f64, l: usize, grid_size: usize) -> Result<(f64, MixingPair)> {
    check_mp_inputs(p, l, grid_size)?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!("eps must be finite and nonnegative, got {eps}")));
    }
    let k = grid_size / 2 + 1;
    let t = cheb_t_grid(k);
    let n_mom = l / 2;
    let rows = 3 + n_mom;
    let mut b = vec![0.0; rows];
    b[0] = 1.0;
    b[1] = 1.0;
    b[rows - 1] = eps.powf(p).min(1.0 + 1e-9);
    let lp = FoldedLp { t: t.clone(), n_mom };
    let prob = LpProblem {
        rows,
        cols: 2 * k + 1,
        b,
        col: Box::new(|j, out| lp.fill(j, out, true, p)),
        cost: Box::new(|j| {
            if j < k {
                t[j].powf(0.5 * p)
            } else if j < 2 * k {
                -t[j - k].powf(0.5 * p)
            } else {
                0.0
            }
        }),
    };
    let sol = maximize(&prob, 50_000)?;
    let pair = unfold_pair(&t, &sol.basis, &sol.x_basic, k, l, p)?;
    Ok((sol.value, pair))
}

/// Dimension/scale transport of the constrained problem: priors on
/// [-delta, delta] tensorized over d coordinates give a separation
///   sup (E_1 - E_0) sum |v_i|^p = d delta^p M_p(eps / (d^{1/p} delta), L)
/// where eps is the l_p tolerance granted to the null.
pub fn scaled_mp_value(
    p: f64,
    eps: f64,
    l: usize,
    d: usize,
    delta: f64,
    grid_size: usize,
) -> Result<f64> {
    if d == 0 || !(delta > 0.0) {
        return Err(Error::invalid("scaled moment problem needs d >= 1 and delta > 0"));
    }
    let eps_norm = (eps / ((d as f64).powf(1.0 / p) * delta)).min(1.0);
    let (value, _) = solve_mp_constrained(p, eps_norm, l, grid_size)?;
    Ok(d as f64 * delta.powf(p) * value)
}

/// Best uniform approximation of |x|^p on [-1, 1] by polynomials of
/// degree at most L.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyApproxResult {
    pub degree: usize,
    pub error: f64,
    /// Coefficients of the optimal polynomial in the shifted Chebyshev
    /// basis of t = x^2: P(x) = sum_i coefficients[i] T_i(2 x^2 - 1).
    pub coefficients: Vec<f64>,
}

impl PolyApproxResult {
    pub fn eval(&self, x: f64) -> f64 {
        shifted_cheb_series(&self.coefficients, x * x)
    }
}

/// Computes the minimax error A_p(L) = inf_deg<=L sup_[-1,1] ||x|^p - P(x)|
/// by a cutting-plane linear program.
///
/// The best approximation of the even function |x|^p is even, so the
/// problem reduces to approximating f(t) = t^{p/2} on [0, 1] by a degree
/// m = floor(L/2) polynomial in t. The LP maximizes
/// E_u f - E_v f over pairs of measures with total mass 1 whose moments
/// against 1, T*_1, ..., T*_m all cancel -- the measure-theoretic dual of
/// the minimax problem; the dual multipliers of the solved LP are the
/// optimal coefficients, and the mass-row multiplier is the error. New
/// grid points violating |f - P| <= error are added until a dense virtual
/// grid is clean, then the claim is verified on a 10x finer grid.
pub fn best_poly_approx(p: f64, l: usize) -> Result<PolyApproxResult> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!("approximation needs finite p > 0, got {p}")));
    }
    if l == 0 {
        return Err(Error::invalid("approximation needs degree >= 1"));
    }
    let m = l / 2;
    let f = |t: f64| t.powf(0.5 * p);
    let virtual_n = (3200 * m + 1).max(100_001);
    let vt = cheb_t_grid(virtual_n);

    // Initial active set: ~2k evenly spaced virtual indices.
    let stride = (virtual_n / 2048).max(1);
    let mut active: Vec<usize> = (0..virtual_n).step_by(stride).collect();
    if *active.last().unwrap() != virtual_n - 1 {
        active.push(virtual_n - 1);
    }

    let rows = m + 2;
    let mut coeffs: Vec<f64> = Vec::new();
    let mut claim = f64::NAN;
    let mut converged = false;
    for _round in 0..60 {
        let pts: Vec<f64> = active.iter().map(|&i| vt[i]).collect();
        let n_active = pts.len();
        let prob = LpProblem {
            rows,
            cols: 2 * n_active,
            b: {
                let mut b = vec![0.0; rows];
                b[0] = 1.0;
                b
            },
            col: Box::new(|j, out| {
                let (sign, t) = if j < n_active { (1.0, pts[j]) } else { (-1.0, pts[j - n_active]) };
                out[0] = 1.0;
                for i in 0..=m {
                    out[1 + i] = sign * shifted_cheb(i, t);
                }
            }),
            cost: Box::new(|j| if j < n_active { f(pts[j]) } else { -f(pts[j - n_active]) }),
        };
        let sol = maximize(&prob, 50_000)?;
        claim = sol.value;
        coeffs = sol.duals[1..].to_vec();

        // Hunt for violations on the virtual grid.
        let mut violations: Vec<(f64, usize)> = Vec::new();
        for (i, &t) in vt.iter().enumerate() {
            let e = (f(t) - shifted_cheb_series(&coeffs, t)).abs();
            if e > claim + 1e-13 {
                violations.push((e, i));
            }
        }
        if violations.is_empty() {
            converged = true;
            break;
        }
        violations.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut added = 0usize;
        for &(_, i) in violations.iter().take(64) {
            if !active.contains(&i) {
                active.push(i);
                added += 1;
            }
        }
        if added == 0 {
            // Every violating point is already a cut; the residual excess
            // is the simplex's dual tolerance, not a missing constraint.
            let worst = violations[0].0 - claim;
            if worst <= 1e-8 {
                converged = true;
                break;
            }
            return Err(Error::Convergence(format!(
                "active points still violate by {worst:.3e}"
            )));
        }
    }
    if !converged {
        return Err(Error::Convergence("cutting-plane refinement did not stabilize".into()));
    }

    // Independent verification on a 10x finer grid; the reported error is
    // the verified maximum, which must agree with the LP's claim.
    let fine_n = 10 * virtual_n;
    let mut verified = 0.0f64;
    let mut extrema: Vec<(f64, f64)> = Vec::new(); // (signed error, t)
    for j in 0..fine_n {
        let t = 0.5 * (1.0 - (j as f64 * std::f64::consts::PI / (fine_n - 1) as f64).cos());
        let e = f(t) - shifted_cheb_series(&coeffs, t);
        if e.abs() > verified {
            verified = e.abs();
        }
        extrema.push((e, t));
    }
    if (verified - claim).abs() > 2e-8 {
        return Err(Error::Convergence(format!(
            "verified error {verified:.3e} disagrees with LP value {claim:.3e}"
        )));
    }
    if verified > 1e-12 {
        // Equioscillation: at least m + 2 alternating near-extremal points.
        let cut = verified * (1.0 - 1e-4);
        let mut count = 0usize;
        let mut last_sign = 0i32;
        for &(e, _) in &extrema {
            if e.abs() >= cut {
                let sign = if e > 0.0 { 1 } else { -1 };
                if sign != last_sign {
                    count += 1;
                    last_sign = sign;
                }
            }
        }
        if count < m + 2 {
            return Err(Error::Convergence(format!(
                "only {count} alternations found, need {}",
                m + 2
            )));
        }
    }
    Ok(PolyApproxResult { degree: l, error: verified, coefficients: coeffs })
}

/// Closed-form bracket for the even-integer moment problem: with
/// g(p, L) = 2^{1-p} sum_{j=floor((p+L)/2)}^{p} C(p, j), the optimal value
/// M_p(L) lies in [g / (2e), 2 g], and M_p(L) = 0 once L >= p.
pub fn mp_even_bracket(p: u32, l: usize) -> (f64, f64) {
    if l >= p as usize {
        return (0.0, 0.0);
    }
    let lo_idx = (p as usize + l) / 2;
    let mut sum = 0.0f64;
    for j in lo_idx..=p as usize {
        let mut binom = 1.0f64;
        for i in 0..j {
            binom *= (p as f64 - i as f64) / (i as f64 + 1.0);
        }
        sum += binom;
    }
    let g = 2.0f64.powi(1 - p as i32) * sum;
    (g / (2.0 * std::f64::consts::E), 2.0 * g)
}

/// Upper bound on the one-coordinate chi-squared divergence between the
/// two Gaussian location mixtures induced by the pair:
///   chi2(P_1, P_0) <= e^{r0^2/(2 sigma^2)} sum_{j>=1} D_j^2 / (j! sigma^{2j}),
/// where D_j is the j-th moment gap and r0 the support radius of pi_0.
/// The inflation factor depends only on pi_0's support: the mixture
/// density ratio is expanded around the pure-noise density, and each
/// cross term against pi_0's shifts is bounded by e^{r0^2/(2 sigma^2)}.
/// For pi_0 = delta_0 the factor is exactly 1 and, for symmetric pi_1,
/// the series is the exact divergence.
pub fn chi2_one_dim_bound(pair: &MixingPair, sigma: f64) -> Result<f64> {
    pair.validate()?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("chi-squared bound needs sigma > 0, got {sigma}")));
    }
    let ratio = pair.delta * pair.delta / (sigma * sigma);
    if ratio > 50.0 {
        return Err(Error::Refused(format!(
            "delta^2/sigma^2 = {ratio:.2} > 50: the series bound would be astronomically loose"
        )));
    }
    let r0 = pair
        .support
        .iter()
        .zip(&pair.w0)
        .filter(|(_, &w)| w > 1e-13)
        .map(|(&s, _)| s.abs())
        .fold(0.0f64, f64::max);

    // Normalized moment gaps keep every term O(ratio^j / j!).
    let normalized: Vec<f64> = pair.support.iter().map(|&s| s / pair.delta).collect();
    let dw: Vec<f64> = pair.w1.iter().zip(&pair.w0).map(|(&a, &b)| a - b).collect();
    let mut pw = vec![1.0f64; normalized.len()];
    let mut sum = 0.0f64;
    let mut weight = 1.0f64; // ratio^j / j!
    let mut j = 0usize;
    let tail;
    loop {
        j += 1;
        if j > 400 {
            return Err(Error::Convergence("chi-squared series did not truncate by j = 400".into()));
        }
        weight *= ratio / j as f64;
        for (v, &s) in pw.iter_mut().zip(&normalized) {
            *v *= s;
        }
        let gap = dot_dd(&pw, &dw); // in [-2, 2]
        sum += gap * gap * weight;
        // Remaining terms are bounded by 4 ratio^i / i! for i > j, a
        // geometric-dominated tail once ratio < j + 2.
        let q = ratio / (j as f64 + 2.0);
        if q < 1.0 {
            let bound = 4.0 * weight * ratio / (j as f64 + 1.0) / (1.0 - q);
            if bound < 1e-12 * sum.max(1e-30) {
                tail = bound;
                break;
            }
        }
    }
    Ok((r0 * r0 / (2.0 * sigma * sigma)).exp() * (sum + tail))
}

/// Tensorization: chi-squared of a d-fold product, (1 + c)^d - 1,
/// computed overflow-safely. Returns +infinity past the f64 range.
pub fn chi2_tensorize(chi2_one_dim: f64, d: usize) -> f64 {
    if chi2_one_dim <= 0.0 {
        return 0.0;
    }
    let log_total = d as f64 * chi2_one_dim.ln_1p();
    if log_total > 700.0 {
        return f64::INFINITY;
    }
    log_total.exp_m1()
}

/// Symmetric two-point pair: pi_0 = delta_0, pi_1 = (delta_{-h}+delta_{h})/2.
/// Matches the first moment only, with the whole variance mismatched.
pub fn two_point_pair(h: f64, p: f64) -> MixingPair {
    MixingPair {
        support: vec![-h, 0.0, h],
        w0: vec![0.0, 1.0, 0.0],
        w1: vec![0.5, 0.0, 0.5],
        matched_moments: 1,
        delta: h,
        p,
    }
}

/// Two-point pair at the free-regime critical scale: h chosen so the
/// tensorized chi-squared lands just under (1 - alpha - beta)^2, which is
/// the largest value compatible with certifying risks (alpha, beta) for
/// exactly supported priors. The pair separates the l_1 norm: eps1 = d h.
pub fn free_tolerance_two_point(d: usize, sigma: f64, alpha: f64, beta: f64) -> Result<MixingPair> {
    if d == 0 || !(sigma > 0.0) {
        return Err(Error::invalid("need d >= 1 and sigma > 0"));
    }
    let c_alpha = 1.0 - alpha - beta;
    if !(c_alpha > 0.0) {
        return Err(Error::invalid(format!(
            "alpha + beta must be below 1, got {}",
            alpha + beta
        )));
    }
    // cosh(h^2/sigma^2) - 1 ~ h^4/(2 sigma^4): choosing
    // h = sigma (2 log(1 + C^2) / d)^{1/4} makes the d-fold tensorized
    // divergence approach C^2 from below (the higher cosh terms only
    // help, see the certificate assembly).
    let h = sigma * (2.0 * (1.0 + c_alpha * c_alpha).ln() / d as f64).powf(0.25);
    Ok(two_point_pair(h, 1.0))
}

/// A self-contained, recheckable claim that no test can distinguish
/// ||v||_p <= eps0 from ||v||_p >= eps1 with type-I error alpha and
/// type-II error below the floor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBoundCertificate {
    pub pair: MixingPair,
    pub d: usize,
    pub sigma: f64,
    #[serde(rename = "chi2_upper")]
    pub chi2_value_upper: f64,
    /// Prior mass pi_0^d places on the null set {||v||_p <= eps0}.
    pub mass0: f64,
    /// Prior mass pi_1^d places on the alternative set {||v||_p >= eps1}.
    pub mass1: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub target_risk_floor: f64,
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Builds a certificate from a mixing pair.
///
/// The argument: under pi_i^d the statistic sum |v_j|^p concentrates near
/// E_i = d E_pi_i |v|^p, so with eps0^p = E_0 / C0 (Markov) and
/// eps1^p = C1 E_1 (Chebyshev with the crude variance bound d delta^{2p})
/// the priors sit inside their hypothesis sets up to mass C0 = C_alpha/4
/// each. Any test distinguishing the hypotheses with risks (alpha, beta)
/// would then distinguish the two data mixtures with total-variation
/// V > 1 - alpha - beta - (mass defects), contradicting
/// V <= sqrt(chi2)/2 when the chi-squared bound is small enough:
/// below (C_alpha/2)^2 in general, and below C_alpha^2 when both masses
/// are exactly 1 (no defect correction is needed then).
pub fn assemble_certificate(
    pair: &MixingPair,
    d: usize,
    sigma: f64,
    alpha: f64,
    beta: f64,
) -> Result<LowerBoundCertificate> {
    pair.validate()?;
    if d == 0 {
        return Err(Error::invalid("certificate needs d >= 1"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("certificate needs sigma > 0, got {sigma}")));
    }
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid("alpha and beta must lie in (0, 1)"));
    }
    let c_alpha = 1.0 - alpha - beta;
    if !(c_alpha > 0.0) {
        return Err(Error::invalid("alpha + beta must be below 1"));
    }
    let p = pair.p;
    let df = d as f64;
    let c0 = c_alpha / 4.0;

    let e0 = df * pair.abs_moment_p(0);
    let e1 = df * pair.abs_moment_p(1);
    if !(e1 > 0.0) {
        return Err(Error::Refused("pi_1 carries no signal mass".into()));
    }
    let v0 = df * pair.abs_moment_p_var(0);
    let v1 = df * pair.abs_moment_p_var(1);

    // Alternative-side radius: Chebyshev with the worst-case variance
    // d delta^{2p} fixes C1; the exact variance then gives the true mass.
    let v_bound = df * pair.delta.powf(2.0 * p);
    let c1 = 1.0 - (v_bound / c0).sqrt() / e1;
    if !(c1 > 0.0 && c1 < 1.0) {
        return Err(Error::Refused(format!(
            "variance bound {v_bound:.3e} swamps the separation mean {e1:.3e}; no tolerance floor certified"
        )));
    }
    let eps1 = (c1 * e1).powf(1.0 / p);
    let slack1 = (1.0 - c1) * e1;
    let mass1 = 1.0 - (v1 / (slack1 * slack1)).min(c0);

    // Null-side radius by Markov, sharpened by Chebyshev when pi_0 has
    // small (or zero) dispersion of |v|^p.
    let (eps0, mass0) = if e0 <= 0.0 {
        (0.0, 1.0)
    } else {
        let eps0_p = e0 / c0;
        let slack0 = eps0_p - e0;
        let tail0 = c0.min(v0 / (slack0 * slack0));
        (eps0_p.powf(1.0 / p), 1.0 - tail0)
    };

    // The hypotheses must actually be separated, with a factor-2 margin
    // on the p-th powers so the certificate does not live on a knife edge.
    if !(eps0.powf(p) <= 0.5 * c1 * e1) || !(eps1 > eps0) {
        return Err(Error::Refused(format!(
            "no admissible tolerance: eps0 = {eps0:.6} does not sit clearly below eps1 = {eps1:.6}"
        )));
    }

    let chi2_1d = chi2_one_dim_bound(pair, sigma)?;
    let chi2 = chi2_tensorize(chi2_1d, d);
    let exact_masses = mass0 >= 1.0 - 1e-12 && mass1 >= 1.0 - 1e-12;
    let chi2_cap = if exact_masses {
        c_alpha * c_alpha
    } else {
        0.25 * c_alpha * c_alpha
    };
    if !(chi2 <= chi2_cap) {
        return Err(Error::Refused(format!(
            "chi-squared bound {chi2:.6} exceeds the cap {chi2_cap:.6} for risks ({alpha}, {beta})"
        )));
    }

    Ok(LowerBoundCertificate {
        pair: pair.clone(),
        d,
        sigma,
        chi2_value_upper: chi2,
        mass0,
        mass1,
        eps0,
        eps1,
        alpha,
        beta,
        target_risk_floor: beta,
    })
}

/// Recomputes every derived quantity from the stored pair and parameters
/// and checks the stored fields against them; any numeric tampering makes
/// the recheck fail. Returns Ok(()) for a sound certificate.
pub fn verify_certificate(cert: &LowerBoundCertificate) -> Result<()> {
    let rebuilt = assemble_certificate(&cert.pair, cert.d, cert.sigma, cert.alpha, cert.beta)
        .map_err(|e| match e {
            Error::Refused(m) => Error::Certificate(format!("reassembly refused: {m}")),
            other => other,
        })?;
    let checks = [
        ("chi2_upper", cert.chi2_value_upper, rebuilt.chi2_value_upper),
        ("mass0", cert.mass0, rebuilt.mass0),
        ("mass1", cert.mass1, rebuilt.mass1),
        ("eps0", cert.eps0, rebuilt.eps0),
        ("eps1", cert.eps1, rebuilt.eps1),
        ("target_risk_floor", cert.target_risk_floor, rebuilt.target_risk_floor),
    ];
    for (name, stored, recomputed) in checks {
        if !rel_close(stored, recomputed) {
            return Err(Error::Certificate(format!(
                "{name} = {stored} does not match recomputed value {recomputed}"
            )));
        }
    }
    Ok(())
}

/// Largest support radius delta such that EVERY pair with L matched
/// moments and support in [-delta, delta] keeps the d-fold tensorized
/// chi-squared at or below `target`. Uses the worst-case moment gaps
/// |D_j| <= 2 delta^j beyond order L.
pub fn feasible_delta(l: usize, d: usize, sigma: f64, target: f64) -> Result<f64> {
    if l == 0 || d == 0 {
        return Err(Error::invalid("need L >= 1 and d >= 1"));
    }
    if !(sigma > 0.0) || !(target > 0.0) || !target.is_finite() {
        return Err(Error::invalid("need sigma > 0 and a positive finite chi-squared target"));
    }
    let worst_case_ok = |delta: f64| -> bool {
        let ratio = delta * delta / (sigma * sigma);
        // sum_{j > L} 4 ratio^j / j!
        let mut weight = 1.0f64;
        for j in 1..=l {
            weight *= ratio / j as f64;
        }
        let mut sum = 0.0f64;
        let mut j = l;
        loop {
            j += 1;
            weight *= ratio / j as f64;
            sum += 4.0 * weight;
            if j > 600 || (ratio < j as f64 && 4.0 * weight < 1e-16 * sum.max(1e-300)) {
                break;
            }
        }
        let one_dim = (0.5 * ratio).exp() * sum;
        chi2_tensorize(one_dim, d) <= target
    };
    let hi_cap = sigma * 50f64.sqrt();
    if worst_case_ok(hi_cap) {
        return Ok(hi_cap);
    }
    let mut lo = 0.0f64;
    let mut hi = hi_cap;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if worst_case_ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::Bracket("no positive support radius meets the chi-squared target".into()));
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::RandomStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn two_point_chi2_closed_form() {
        // pi_0 = delta_0: the series is exact, chi2 = cosh(h^2/s^2) - 1.
        for &(h, sigma) in &[(0.4f64, 1.0f64), (0.8, 1.3), (0.1, 0.5)] {
            let pair = two_point_pair(h, 1.0);
            pair.validate().unwrap();
            let got = chi2_one_dim_bound(&pair, sigma).unwrap();
            let expect = (h * h / (sigma * sigma)).cosh() - 1.0;
            assert!(
                (got - expect).abs() < 1e-10 * expect.max(1e-12),
                "h={h} sigma={sigma}: {got} vs {expect}"
            );
        }
        let wild = two_point_pair(10.0, 1.0);
        assert!(matches!(chi2_one_dim_bound(&wild, 1.0), Err(Error::Refused(_))));
    }

    #[test]
    fn chi2_bound_dominates_quadrature() {
        // Random fuzzy pairs: the series bound must sit above the exact
        // divergence computed by an independent quadrature; for
        // delta_0-null pairs the two agree.
        let mut rng = RandomStream::new(314).rng();
        for trial in 0..12 {
            let h = 0.2 + 0.5 * rng.gen::<f64>();
            let a = 0.3 + 0.4 * rng.gen::<f64>();
            let (pair, exactness) = if trial % 2 == 0 {
                // pi_0 = delta_0, pi_1 symmetric two-point: exact case.
                (two_point_pair(h, 1.0), true)
            } else {
                // Fuzzy pi_0: symmetric two-point at radius a h vs mixture.
                let pair = MixingPair {
                    support: vec![-h, -a * h, 0.0, a * h, h],
                    w0: vec![0.0, 0.35, 0.3, 0.35, 0.0],
                    w1: vec![0.5, 0.0, 0.0, 0.0, 0.5],
                    matched_moments: 1,
                    delta: h,
                    p: 1.0,
                };
                (pair, false)
            };
            let sigma = 1.0;
            let bound = chi2_one_dim_bound(&pair, sigma).unwrap();
            let exact = ttl_oracles::chi2_mixtures_1d(&pair.support, &pair.w0, &pair.w1, sigma);
            assert!(
                exact <= bound * (1.0 + 1e-8) + 1e-12,
                "trial {trial}: exact {exact} above bound {bound}"
            );
            if exactness {
                assert!(
                    (exact - bound).abs() < 1e-8 * bound.max(1e-12),
                    "trial {trial}: {exact} vs {bound}"
                );
            }
        }
    }

    #[test]
    fn tensorization_identities() {
        let c = 0.013;
        assert_abs_diff_eq!(chi2_tensorize(c, 3), (1.0 + c).powi(3) - 1.0, epsilon = 1e-14);
        assert_eq!(chi2_tensorize(0.0, 100), 0.0);
        assert_eq!(chi2_tensorize(10.0, 1_000_000), f64::INFINITY);
        assert!(chi2_tensorize(1e-9, 1000) > 0.0);
    }

    #[test]
    fn moment_problem_golden_values() {
        // M_4(3): match moments up to order 3; optimum 1/4.
        let (v, pair) = solve_mp(4.0, 3, 512).unwrap();
        assert_abs_diff_eq!(v, 0.25, epsilon = 1e-8);
        pair.validate().unwrap();
        // The value must equal the recomputed moment gap of the pair.
        let recomputed = pair.abs_moment_p(1) - pair.abs_moment_p(0);
        assert_abs_diff_eq!(v, recomputed, epsilon = 1e-9);
        // Even p with L >= p: the objective is forced to zero.
        let (v0, _) = solve_mp(4.0, 4, 512).unwrap();
        assert!(v0.abs() < 1e-9, "M_4(4) = {v0}");
        let (v2, _) = solve_mp(2.0, 2, 512).unwrap();
        assert!(v2.abs() < 1e-9, "M_2(2) = {v2}");
        // M_p(1) = 1: only the (symmetric) first moment is pinned.
        let (v1, _) = solve_mp(1.0, 1, 512).unwrap();
        assert_abs_diff_eq!(v1, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn moment_problem_even_bracket() {
        let (lo, hi) = mp_even_bracket(6, 4);
        let (v, _) = solve_mp(6.0, 4, 512).unwrap();
        assert!(v >= lo && v <= hi, "M_6(4) = {v} outside [{lo}, {hi}]");
        assert_eq!(mp_even_bracket(4, 4), (0.0, 0.0));
        // g(4,3) = 2^{-3} (C(4,3) + C(4,4)) = 5/8.
        let (lo43, hi43) = mp_even_bracket(4, 3);
        assert_abs_diff_eq!(hi43, 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(lo43, 0.625 / (2.0 * std::f64::consts::E), epsilon = 1e-12);
    }

    #[test]
    fn approx_golden_values() {
        // Independently frozen minimax errors for |x|^p on [-1,1]
        // (computed by a Remez exchange in the oracle crate).
        let cases = [
            (1.0, 1, 0.5),
            (1.0, 2, 0.125),
            (1.0, 4, 0.067620899276),
            (1.0, 8, 0.034689728082),
            (1.0, 16, 0.017468052343),
            (1.5, 4, 0.021049941369),
            (1.5, 8, 0.007758430395),
            (3.0, 4, 0.008883476483),
            (4.0, 3, 0.125),
        ];
        for &(p, l, expect) in &cases {
            let r = best_poly_approx(p, l).unwrap();
            assert!(
                (r.error - expect).abs() < 5e-8,
                "A_{p}({l}) = {} vs {expect}",
                r.error
            );
            assert_eq!(r.degree, l);
            assert_eq!(r.coefficients.len(), l / 2 + 1);
        }
        // Exactly representable cases are flat zero.
        let r = best_poly_approx(2.0, 2).unwrap();
        assert!(r.error < 1e-12, "A_2(2) = {}", r.error);
    }

    #[test]
    fn approx_rate_for_l1() {
        // L * A_1(L) increases toward the Bernstein-type limit ~0.2802.
        let mut prev = 0.0;
        for &l in &[4usize, 8, 16] {
            let r = best_poly_approx(1.0, l).unwrap();
            let scaled = l as f64 * r.error;
            assert!(scaled > prev, "L A_1(L) not increasing at L = {l}");
            assert!(scaled > 0.27 && scaled < 0.2802, "L A_1(L) = {scaled} at L = {l}");
            prev = scaled;
        }
    }

    #[test]
    fn duality_matches_approximation() {
        // M_p(L) = 2 A_p(L): the moment LP and the approximation LP are
        // dual; with a fine grid the discretization deficit is < 1e-5.
        for &(p, l) in &[(1.0, 4usize), (1.5, 8), (3.0, 4)] {
            let (mval, _) = solve_mp(p, l, 2048).unwrap();
            let a = best_poly_approx(p, l).unwrap().error;
            assert!(
                (mval - 2.0 * a).abs() < 2e-5,
                "p={p} L={l}: M = {mval}, 2A = {}",
                2.0 * a
            );
        }
    }

    #[test]
    fn constrained_problem_behaviour() {
        // Unconstrained when eps >= 1.
        let (vu, _) = solve_mp(1.0, 4, 512).unwrap();
        let (vc, _) = solve_mp_constrained(1.0, 1.0, 4, 512).unwrap();
        assert_abs_diff_eq!(vu, vc, epsilon = 1e-9);
        // Monotone in eps and capped by the unconstrained value.
        let (v_small, pair_small) = solve_mp_constrained(1.0, 0.04, 8, 512).unwrap();
        let (v_mid, _) = solve_mp_constrained(1.0, 0.25, 8, 512).unwrap();
        assert!(v_small <= v_mid + 1e-10 && v_mid <= vu + 1e-10);
        pair_small.validate().unwrap();
        // The null measure respects its moment budget.
        assert!(pair_small.abs_moment_p(0) <= 0.04 + 1e-9);
        // Scaling identity: d = 1, delta = 1 reduces to the plain value.
        let scaled = scaled_mp_value(1.0, 0.25, 8, 1, 1.0, 512).unwrap();
        assert_abs_diff_eq!(scaled, v_mid, epsilon = 1e-12);
    }

    #[test]
    fn feasible_delta_monotone_and_positive() {
        let a = feasible_delta(4, 64, 1.0, 0.01).unwrap();
        let b = feasible_delta(4, 64, 1.0, 0.25).unwrap();
        assert!(a > 0.0 && b >= a, "a = {a}, b = {b}");
        // More matched moments allow a larger radius.
        let c = feasible_delta(8, 64, 1.0, 0.01).unwrap();
        assert!(c > a, "c = {c} vs a = {a}");
        // And the scale c = delta^2 d^{1/(L+1)} / (sigma^2 L) sits in a
        // narrow band (the classical rate for this worst-case series).
        let delta = feasible_delta(12, 4096, 1.0, 0.04).unwrap();
        let rate = delta * delta * (4096f64).powf(1.0 / 13.0) / 12.0;
        assert!(rate > 0.05 && rate < 0.5, "rate constant {rate}");
    }

    #[test]
    fn certificate_roundtrip_and_tamper() {
        let pair = free_tolerance_two_point(256, 1.0, 0.05, 0.1).unwrap();
        let cert = assemble_certificate(&pair, 256, 1.0, 0.05, 0.1).unwrap();
        // Two-point priors are exactly supported: both masses are 1 and
        // the cap is the full (1 - alpha - beta)^2.
        assert_eq!(cert.mass0, 1.0);
        assert_eq!(cert.mass1, 1.0);
        assert!(cert.chi2_value_upper <= 0.85 * 0.85);
        assert!(cert.chi2_value_upper > 0.25 * 0.85 * 0.85, "should need the exact-mass cap");
        assert_eq!(cert.eps0, 0.0);
        assert!(cert.eps1 > 0.0);
        verify_certificate(&cert).unwrap();

        let mut bad = cert.clone();
        bad.chi2_value_upper *= 0.5;
        assert!(matches!(verify_certificate(&bad), Err(Error::Certificate(_))));
        let mut bad = cert.clone();
        bad.eps1 *= 1.01;
        assert!(matches!(verify_certificate(&bad), Err(Error::Certificate(_))));
        let mut bad = cert.clone();
        bad.mass1 = 0.999;
        assert!(matches!(verify_certificate(&bad), Err(Error::Certificate(_))));
        let mut bad = cert.clone();
        bad.target_risk_floor = 0.2;
        assert!(matches!(verify_certificate(&bad), Err(Error::Certificate(_))));
        // Tampering the pair itself breaks reassembly or the comparison.
        let mut bad = cert.clone();
        bad.pair.w1[0] = 0.6;
        assert!(verify_certificate(&bad).is_err());
    }

    #[test]
    fn fuzzy_pair_certificate_refusal() {
        // Moment-matched extremal pairs for p = 1 have nearly equal
        // absolute means, so no tolerance gap survives: assembly refuses.
        let (_, pair) = solve_mp(1.0, 8, 512).unwrap();
        let scaled = pair.scale(0.05);
        let err = assemble_certificate(&scaled, 1024, 1.0, 0.05, 0.1).unwrap_err();
        assert!(matches!(err, Error::Refused(_)), "got {err:?}");
    }

    #[test]
    fn serde_roundtrip() {
        let pair = free_tolerance_two_point(128, 1.0, 0.05, 0.1).unwrap();
        let cert = assemble_certificate(&pair, 128, 1.0, 0.05, 0.1).unwrap();
        let json = serde_json::to_string(&cert).unwrap();
        assert!(json.contains("\"chi2_upper\""));
        assert!(json.contains("\"L\":1"));
        let back: LowerBoundCertificate = serde_json::from_str(&json).unwrap();
        verify_certificate(&back).unwrap();
    }
}

