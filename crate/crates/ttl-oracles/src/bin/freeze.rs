// Prints every oracle-derived value that the main test suites freeze as an
// expected constant, so the numbers can be regenerated from scratch:
//
//     cargo run -p ttl-oracles --bin freeze
//
// Debias corrections below are written out by hand (H2 = x^2-1,
// H4 = x^4-6x^2+3, mu_2 = 1, mu_4 = 3, mu_6 = 15) rather than calling the
// library under test.

use ttl_oracles::{best_abs_pow_approx, gauss_expectation};

fn debiased_integrand(p: u32) -> impl Fn(f64) -> f64 {
    move |x: f64| match p {
        2 => x * x - 1.0,
        4 => x.powi(4) - 3.0 - 6.0 * (x * x - 1.0),
        6 => {
            x.powi(6)
                - 15.0
                - 45.0 * (x * x - 1.0)
                - 15.0 * (x.powi(4) - 6.0 * x * x + 3.0)
        }
        _ => unreachable!("only even p in {{2,4,6}} are tabulated"),
    }
}

fn main() {
    println!("== debiased statistic means, d = 1, sigma = 1 (expect v^p) ==");
    for p in [2u32, 4, 6] {
        for v in [0.0f64, 0.3, 0.7, 1.7] {
            let e = gauss_expectation(debiased_integrand(p), v, 1.0, &[]);
            println!("p={p} v={v:<4} E[T_p] = {e:.12}  (v^p = {:.12})", v.powi(p as i32));
        }
    }

    println!("\n== minimax approximation errors A_p(L) of |x|^p on [-1,1] ==");
    for (p, l) in [
        (1.0, 1usize),
        (1.0, 2),
        (2.0, 2),
        (4.0, 3),
        (1.0, 4),
        (1.0, 8),
        (1.0, 16),
        (1.0, 32),
        (1.0, 64),
        (1.5, 4),
        (1.5, 8),
        (1.5, 16),
        (3.0, 4),
        (3.0, 8),
        (3.0, 16),
    ] {
        let a = best_abs_pow_approx(p, l);
        println!("A_{p}({l}) = {a:.12}   L*A = {:.12}", l as f64 * a);
    }

    println!("\n== misc anchors ==");
    let e_abs = gauss_expectation(f64::abs, 0.0, 1.0, &[0.0]);
    println!("E|Z|              = {e_abs:.12} (sqrt(2/pi) = {:.12})", (2.0 / std::f64::consts::PI).sqrt());
    let ch = 1.0f64.cosh() - 1.0;
    println!("cosh(1) - 1       = {ch:.12}");
}
