//! Special functions behind the P-values: complementary error function, upper
//! regularized incomplete gamma and the standard normal quantile.

use statrs::function::{erf, gamma};

/// `erfc(x) = 1 - erf(x)`.
pub fn erfc(x: f64) -> f64 {
    erf::erfc(x)
}

/// Upper regularized incomplete gamma `Q(a, x) = Gamma(a, x) / Gamma(a)`, the
/// `igamc` of the NIST reference code. `a > 0`, `x >= 0`.
pub fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma::gamma_ur(a, x)
}

/// Inverse standard normal CDF, `p` in `(0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p)
}
