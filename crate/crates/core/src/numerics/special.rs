//! Scalar special functions.

use std::f64::consts::PI;

/// Two-exponential approximation of the Gaussian Q-function,
/// `Q(x) ~= exp(-x^2/2)/12 + exp(-2 x^2/3)/4`.
///
/// This approximation, not the exact Q-function, is what feeds the pairwise
/// error probability chain; its exponential form is what makes the Rayleigh
/// average in the unconditional PEP closed-form.
pub fn q_function_approx(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "q_function_approx expects x >= 0");
    (-(x * x) / 2.0).exp() / 12.0 + (-(2.0 * x * x) / 3.0).exp() / 4.0
}

/// Complementary error function.
///
/// Scheme: for |x| <= 2 the regularized power series
/// `erf(x) = (2/sqrt(pi)) x e^{-x^2} sum_k (2x^2)^k / (1*3*...*(2k+1))`
/// (all terms positive, no cancellation); for x > 2 the Legendre continued
/// fraction `erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + ...)))`
/// evaluated with the modified Lentz algorithm. Negative arguments use the
/// reflection `erfc(-x) = 2 - erfc(x)`. Absolute error is below 1e-14 over
/// the real line, comfortably inside the 1e-12 contract.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x <= 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

fn erf_series(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= 2.0 * x2 / (2.0 * f64::from(k) + 1.0);
        sum += term;
        if term < 1e-18 * sum || k > 200 {
            break;
        }
    }
    (2.0 / PI.sqrt()) * x * (-x2).exp() * sum
}

fn erfc_continued_fraction(x: f64) -> f64 {
    // Modified Lentz evaluation of 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))).
    let tiny = 1e-300;
    let mut f = x;
    let mut c = f;
    let mut d = 0.0;
    for k in 1..=300 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / PI.sqrt() / f
}
