//! Direct chi-squared divergence between two one-dimensional Gaussian
//! location mixtures, by adaptive quadrature of the density ratio.

use crate::quad::adaptive_simpson_split;

fn mixture_pdf(support: &[f64], weights: &[f64], sigma: f64, x: f64) -> f64 {
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    support
        .iter()
        .zip(weights)
        .map(|(&s, &w)| {
            let z = (x - s) / sigma;
            w * norm * (-0.5 * z * z).exp()
        })
        .sum()
}

/// chi^2(P1, P0) where P_i is the sigma-noise Gaussian mixture with the given
/// weights on a shared support. Integrates (p1 - p0)^2 / p0 over a window
/// wide enough that the discarded tails are < 1e-30.
pub fn chi2_mixtures_1d(support: &[f64], w0: &[f64], w1: &[f64], sigma: f64) -> f64 {
    assert_eq!(support.len(), w0.len());
    assert_eq!(support.len(), w1.len());
    assert!(sigma > 0.0);
    let lo = support.iter().copied().fold(f64::INFINITY, f64::min) - 14.0 * sigma;
    let hi = support.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 14.0 * sigma;
    let integrand = |x: f64| {
        let p0 = mixture_pdf(support, w0, sigma, x);
        let p1 = mixture_pdf(support, w1, sigma, x);
        let d = p1 - p0;
        d * d / p0
    };
    adaptive_simpson_split(integrand, lo, hi, support, 1e-11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_mixtures() {
        let got = chi2_mixtures_1d(&[-0.5, 0.5], &[0.4, 0.6], &[0.4, 0.6], 1.0);
        assert_abs_diff_eq!(got, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn two_gaussians_closed_form() {
        // chi^2(N(mu,1), N(0,1)) = exp(mu^2) - 1.
        let mu = 0.7f64;
        let got = chi2_mixtures_1d(&[0.0, mu], &[1.0, 0.0], &[0.0, 1.0], 1.0);
        assert_abs_diff_eq!(got, (mu * mu).exp() - 1.0, epsilon = 1e-8);
    }

    #[test]
    fn symmetric_pair_vs_point_null() {
        // pi1 = (1/2)(delta_d + delta_{-d}), pi0 = delta_0:
        // chi^2 = cosh(d^2/sigma^2) - 1 exactly.
        let d = 0.8f64;
        let got = chi2_mixtures_1d(&[-d, 0.0, d], &[0.0, 1.0, 0.0], &[0.5, 0.0, 0.5], 1.0);
        assert_abs_diff_eq!(got, (d * d).cosh() - 1.0, epsilon = 1e-8);
    }
}
