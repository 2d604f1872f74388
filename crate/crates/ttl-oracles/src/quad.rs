//! Adaptive Simpson quadrature and Gaussian expectations built on it.

/// Recursion limit for the adaptive subdivision. 2^50 subintervals is far
/// beyond anything a smooth integrand needs; hitting it means the integrand
/// is pathological and the result should not be trusted silently.
const MAX_DEPTH: u32 = 50;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

fn adapt(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
        // Richardson extrapolation: one order better than plain Simpson.
        left + right + delta / 15.0
    } else {
        adapt(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1)
            + adapt(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1)
    }
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    adapt(&f, a, fa, b, fb, m, fm, whole, tol, 0)
}

/// Integrate `f` over `[a, b]`, forcing subdivision boundaries at the given
/// interior points. Use this when the integrand has kinks (e.g. |x|^p at 0).
pub fn adaptive_simpson_split(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    splits: &[f64],
    tol: f64,
) -> f64 {
    let mut pts: Vec<f64> = splits.iter().copied().filter(|t| *t > a && *t < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let per = tol / (pts.len() - 1) as f64;
    pts.windows(2)
        .map(|w| adaptive_simpson(&f, w[0], w[1], per))
        .sum()
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// E[f(v + sigma * Z)] for Z ~ N(0,1), by quadrature on z in [-14, 14]
/// (the discarded tails carry mass < 1e-43). `kinks` lists x-locations where
/// f is not smooth; they are mapped into z-space and used as split points.
pub fn gauss_expectation(f: impl Fn(f64) -> f64, v: f64, sigma: f64, kinks: &[f64]) -> f64 {
    assert!(sigma > 0.0, "gauss_expectation needs sigma > 0");
    let zs: Vec<f64> = kinks.iter().map(|x| (x - v) / sigma).collect();
    adaptive_simpson_split(
        |z| f(v + sigma * z) * std_normal_pdf(z),
        -14.0,
        14.0,
        &zs,
        1e-13,
    )
}
