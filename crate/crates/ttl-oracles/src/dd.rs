//! Error-free transformations: compensated sums and dot products.
//!
//! `dot_dd` carries roughly twice the working precision through the
//! accumulation (Ogita–Rump–Oishi "Dot2"), which is what the certificate
//! rechecks mean by "independent 128-bit-accumulated moment sums".

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Neumaier's improved Kahan–Babuška sum.
pub fn sum_neumaier(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Dot product with twice-working-precision accumulation.
pub fn dot_dd(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mut p = 0.0f64;
    let mut e = 0.0f64;
    for (&x, &y) in xs.iter().zip(ys) {
        let (h, r) = two_prod(x, y);
        let (s, q) = two_sum(p, h);
        p = s;
        e += q + r;
    }
    p + e
}

/// l-th power moment of a weighted discrete measure, accumulated carefully.
pub fn moment_dd(support: &[f64], weights: &[f64], l: u32) -> f64 {
    let pows: Vec<f64> = support.iter().map(|s| s.powi(l as i32)).collect();
    dot_dd(&pows, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_beats_naive_on_cancellation() {
        // 1 + 1e100 + 1 - 1e100 = 2, naive sum returns 0.
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum_neumaier(xs), 2.0);
        assert_eq!(xs.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn dot_matches_exact_rational() {
        let xs = [0.1; 10];
        let ys = [1.0; 10];
        // Exactly ten copies of the double nearest 0.1.
        assert_eq!(dot_dd(&xs, &ys), 10.0 * 0.1f64);
    }

    #[test]
    fn moment_of_point_mass() {
        assert_eq!(moment_dd(&[2.0], &[1.0], 10), 1024.0);
    }
}
