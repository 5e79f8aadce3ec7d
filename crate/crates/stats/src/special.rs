//! Special functions used by the p-value formulas.

use statrs::function::gamma;

/// Complementary error function, via `erfc(x) = Q(1/2, x^2)` for `x >= 0`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let upper = igamc(0.5, x * x);
    if x >= 0.0 {
        upper
    } else {
        2.0 - upper
    }
}

/// Regularized upper incomplete gamma function Q(a, x).
///
/// Defined for `a > 0`; `x <= 0` gives 1 and `x = +inf` gives 0.
pub fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma::gamma_ur(a, x).clamp(0.0, 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}
