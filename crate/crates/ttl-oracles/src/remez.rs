//! Remez exchange for the minimax approximation of |x|^p on [-1, 1].
//!
//! |x|^p is even, so its best degree-L approximant is an even polynomial and
//! the problem collapses to approximating t^(p/2) on [0, 1] by polynomials of
//! degree m = floor(L/2). The exchange below works in that reduced variable,
//! with shifted-Chebyshev basis functions for conditioning and a graded scan
//! grid (t = u^2) because the error curve wiggles hardest near t = 0.

use nalgebra::{DMatrix, DVector};

const SCAN_POINTS: usize = 200_001;
const MAX_ITERS: usize = 80;

/// Shifted Chebyshev polynomials T_j(2t - 1) for j = 0..=m, evaluated at t.
fn cheb_row(t: f64, m: usize) -> Vec<f64> {
    let s = 2.0 * t - 1.0;
    let mut row = Vec::with_capacity(m + 1);
    let (mut prev, mut cur) = (1.0, s);
    row.push(1.0);
    if m >= 1 {
        row.push(s);
    }
    for _ in 2..=m {
        let next = 2.0 * s * cur - prev;
        row.push(next);
        prev = cur;
        cur = next;
    }
    row
}

fn eval_cheb(coefs: &[f64], t: f64) -> f64 {
    // Clenshaw on the shifted argument.
    let s = 2.0 * t - 1.0;
    let mut b1 = 0.0f64;
    let mut b2 = 0.0f64;
    for &c in coefs.iter().rev() {
        let b0 = 2.0 * s * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    b1 - s * b2
}

/// Minimax error of degree-`l` polynomial approximation to |x|^p on [-1, 1].
///
/// Exact zeros (p even integer with l >= p) are returned without iterating.
/// Panics if the exchange fails to produce an alternating reference, which
/// does not happen for these concave-kink targets.
pub fn best_abs_pow_approx(p: f64, l: usize) -> f64 {
    assert!(p > 0.0, "norm exponent must be positive");
    let q = 0.5 * p;
    let m = l / 2;
    if p.fract() == 0.0 && (p as usize) % 2 == 0 && l >= p as usize {
        return 0.0;
    }
    let f = |t: f64| t.powf(q);

    // Initial reference: extrema of the shifted Chebyshev polynomial.
    let n_ref = m + 2;
    let mut reference: Vec<f64> = (0..n_ref)
        .map(|k| 0.5 * (1.0 - (k as f64 * std::f64::consts::PI / (n_ref - 1) as f64).cos()))
        .collect();

    let mut leveled = 0.0f64;
    for _ in 0..MAX_ITERS {
        // Solve for coefficients and the leveled error E on the reference.
        let mut a = DMatrix::zeros(n_ref, n_ref);
        let mut b = DVector::zeros(n_ref);
        for (k, &t) in reference.iter().enumerate() {
            let row = cheb_row(t, m);
            for (j, &v) in row.iter().enumerate() {
                a[(k, j)] = v;
            }
            a[(k, m + 1)] = if k % 2 == 0 { 1.0 } else { -1.0 };
            b[k] = f(t);
        }
        let sol = a
            .lu()
            .solve(&b)
            .expect("Remez reference system is non-singular");
        let coefs: Vec<f64> = sol.as_slice()[..=m].to_vec();
        leveled = sol[m + 1].abs();

        // Dense scan of the error, graded toward t = 0.
        let err_at = |t: f64| f(t) - eval_cheb(&coefs, t);
        let mut candidates: Vec<(f64, f64)> = Vec::new(); // (t, e)
        let mut last_sign = 0i8;
        for i in 0..SCAN_POINTS {
            let u = i as f64 / (SCAN_POINTS - 1) as f64;
            let t = u * u;
            let e = err_at(t);
            let sign = if e > 0.0 {
                1
            } else if e < 0.0 {
                -1
            } else {
                0
            };
            if sign == 0 {
                continue;
            }
            if sign == last_sign {
                let cur = candidates.last_mut().unwrap();
                if e.abs() > cur.1.abs() {
                    *cur = (t, e);
                }
            } else {
                candidates.push((t, e));
                last_sign = sign;
            }
        }

        // Trim to m + 2 candidates, dropping the weaker end first.
        while candidates.len() > n_ref {
            if candidates.first().unwrap().1.abs() <= candidates.last().unwrap().1.abs() {
                candidates.remove(0);
            } else {
                candidates.pop();
            }
        }
        assert!(
            candidates.len() == n_ref,
            "exchange lost alternation: {} extrema for reference of {}",
            candidates.len(),
            n_ref
        );

        let worst = candidates
            .iter()
            .map(|&(_, e)| e.abs())
            .fold(0.0f64, f64::max);
        reference = candidates.iter().map(|&(t, _)| t).collect();
        if worst - leveled <= 1e-12 * leveled.max(1e-300) {
            return worst;
        }
    }
    leveled
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degree_one_approximation_of_abs() {
        // Best constant 1/2; adding a linear term cannot help an even target.
        assert_abs_diff_eq!(best_abs_pow_approx(1.0, 1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn degree_two_approximation_of_abs() {
        assert_abs_diff_eq!(best_abs_pow_approx(1.0, 2), 0.125, epsilon = 1e-10);
    }

    #[test]
    fn exact_for_polynomial_targets() {
        assert_eq!(best_abs_pow_approx(2.0, 2), 0.0);
        assert_eq!(best_abs_pow_approx(4.0, 4), 0.0);
        assert_eq!(best_abs_pow_approx(4.0, 7), 0.0);
    }

    #[test]
    fn quartic_by_degree_three() {
        // deg-3 approx of x^4 collapses to deg-1 approx of t^2 on [0,1]: 1/8.
        assert_abs_diff_eq!(best_abs_pow_approx(4.0, 3), 0.125, epsilon = 1e-10);
    }

    #[test]
    fn bernstein_constant_trend() {
        let values: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&l| l as f64 * best_abs_pow_approx(1.0, l))
            .collect();
        for &v in &values {
            assert!(v > 0.25 && v < 0.32, "L*A1(L) = {v}");
        }
        let d0 = (values[0] - 0.2802).abs();
        let d1 = (values[1] - 0.2802).abs();
        let d2 = (values[2] - 0.2802).abs();
        assert!(d1 < d0 && d2 < d1, "not converging: {values:?}");
    }
}
