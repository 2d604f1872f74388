//! Gaussian quadrature rules built by the Golub-Welsch eigenvalue method
//! and cached per node count.
//!
//! The Hermite rule here is the probabilists' one: nodes/weights satisfy
//! sum_i w_i f(z_i) ~ E[f(Z)] for Z ~ N(0,1), with weights summing to 1.
//! The Legendre rule integrates over [-1, 1] with weights summing to 2.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use once_cell::sync::Lazy;

/// Nodes and weights of a quadrature rule.
pub type Rule = Arc<(Vec<f64>, Vec<f64>)>;

static HERMITE_CACHE: Lazy<Mutex<HashMap<usize, Rule>>> = Lazy::new(|| Mutex::new(HashMap::new()));
static LEGENDRE_CACHE: Lazy<Mutex<HashMap<usize, Rule>>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Golub-Welsch: eigen-decompose the symmetric tridiagonal Jacobi matrix
/// with the given off-diagonal, then read nodes off the eigenvalues and
/// weights off the squared first eigenvector components times mu0.
fn golub_welsch(offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = offdiag.len() + 1;
    let mut j = DMatrix::<f64>::zeros(n, n);
    for (i, &b) in offdiag.iter().enumerate() {
        j[(i, i + 1)] = b;
        j[(i + 1, i)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = mu0 * eig.eigenvectors[(0, i)] * eig.eigenvectors[(0, i)];
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// n-node Gauss-Hermite rule for the standard normal weight.
/// Exact for polynomials of degree <= 2n - 1.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1);
    let mut cache = HERMITE_CACHE.lock().unwrap();
    if let Some(rule) = cache.get(&n) {
        return Arc::clone(rule);
    }
    // Probabilists' recurrence x H_j = H_{j+1} + j H_{j-1} gives
    // off-diagonal entries sqrt(j).
    let offdiag: Vec<f64> = (1..n).map(|j| (j as f64).sqrt()).collect();
    let rule = Arc::new(golub_welsch(&offdiag, 1.0));
    cache.insert(n, Arc::clone(&rule));
    rule
}

/// n-node Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut cache = LEGENDRE_CACHE.lock().unwrap();
    if let Some(rule) = cache.get(&n) {
        return Arc::clone(rule);
    }
    let offdiag: Vec<f64> = (1..n)
        .map(|j| {
            let j = j as f64;
            j / (4.0 * j * j - 1.0).sqrt()
        })
        .collect();
    let rule = Arc::new(golub_welsch(&offdiag, 2.0));
    cache.insert(n, Arc::clone(&rule));
    rule
}

/// E[f(Z)] for standard normal Z via the n-node Hermite rule.
pub fn gauss_expect(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let rule = gauss_hermite(n);
    let (nodes, weights) = rule.as_ref();
    crate::num::sum_neumaier(nodes.iter().zip(weights).map(|(&z, &w)| w * f(z)))
}

/// Integral of f over [a, b] via the n-node Legendre rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let rule = gauss_legendre(n);
    let (nodes, weights) = rule.as_ref();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * crate::num::sum_neumaier(nodes.iter().zip(weights).map(|(&t, &w)| w * f(mid + half * t)))
}

/// E[f(X)] for X ~ N(mean, 1), for f that is smooth away from finitely
/// many kink points. Gauss-Hermite converges only polynomially on kinked
/// integrands, so instead the real line is truncated to
/// [mean - 14, mean + 14] (discarded tail mass < 1e-43), split at the
/// kinks, and each smooth piece is integrated with composite 24-node
/// Legendre panels of width <= 0.5 -- effectively exact for analytic
/// pieces.
pub fn normal_expect_split(f: impl Fn(f64) -> f64, mean: f64, kinks: &[f64]) -> f64 {
    let lo = mean - 14.0;
    let hi = mean + 14.0;
    let mut cuts = vec![lo];
    for &k in kinks {
        if k > lo && k < hi {
            cuts.push(k);
        }
    }
    cuts.push(hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let density = |x: f64| {
        let z = x - mean;
        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut pieces = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let panels = ((b - a) / 0.5).ceil().max(1.0) as usize;
        let step = (b - a) / panels as f64;
        for i in 0..panels {
            let pa = a + i as f64 * step;
            pieces.push(integrate(|x| f(x) * density(x), pa, pa + step, 24));
        }
    }
    crate::num::sum_neumaier(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_moments_exact() {
        // E[Z^{2k}] = (2k-1)!!, exact while 2k <= 2n - 1.
        for &(k, expect) in &[(1u32, 1.0), (2, 3.0), (3, 15.0), (4, 105.0), (5, 945.0)] {
            let got = gauss_expect(|z| z.powi(2 * k as i32), 20);
            assert_abs_diff_eq!(got, expect, epsilon = 1e-9 * expect);
        }
        // Odd moments vanish.
        assert!(gauss_expect(|z| z.powi(3), 20).abs() < 1e-12);
        // Weights sum to one.
        let rule = gauss_hermite(200);
        let total: f64 = rule.1.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hermite_only_coarse_on_kinks() {
        // |x| is Lipschitz but not smooth: the 200-node Hermite rule is
        // only good to ~2e-3 here, which is why kinked integrands go
        // through normal_expect_split instead.
        let got = gauss_expect(f64::abs, 200);
        let expect = (2.0 / std::f64::consts::PI).sqrt();
        assert!((got - expect).abs() < 5e-3, "got {got}, expect {expect}");
        assert!((got - expect).abs() > 1e-6, "kink error unexpectedly small: {got}");
    }

    #[test]
    fn split_expectation_handles_kinks() {
        let expect = (2.0 / std::f64::consts::PI).sqrt();
        let got = normal_expect_split(f64::abs, 0.0, &[0.0]);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
        // E|Z + u| = 2 phi(u) + u (2 Phi(u) - 1) at u = 0.7.
        let u = 0.7f64;
        let phi = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let big_phi = 0.5 * (1.0 + statrs::function::erf::erf(u / std::f64::consts::SQRT_2));
        let closed = 2.0 * phi + u * (2.0 * big_phi - 1.0);
        let got = normal_expect_split(f64::abs, u, &[0.0]);
        assert_abs_diff_eq!(got, closed, epsilon = 1e-12);
        // Mass integrates to one regardless of kink list.
        assert_abs_diff_eq!(normal_expect_split(|_| 1.0, -3.0, &[0.0, 1.0]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn legendre_integrals() {
        let got = integrate(|x| x * x, -1.0, 1.0, 16);
        assert_abs_diff_eq!(got, 2.0 / 3.0, epsilon = 1e-13);
        let got = integrate(f64::cos, 0.0, 1.0, 32);
        assert_abs_diff_eq!(got, 1.0f64.sin(), epsilon = 1e-13);
        let rule = gauss_legendre(128);
        let total: f64 = rule.1.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rules_are_cached() {
        let a = gauss_hermite(64);
        let b = gauss_hermite(64);
        assert!(Arc::ptr_eq(&a, &b));
    }
}
