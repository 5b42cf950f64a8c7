//! Special functions.
//!
//! `ln_gamma`, `erf` and `erfc` come from `libm`; the polygamma functions and the
//! scaled complementary error function are evaluated here because the
//! estimators need them to near machine precision over wide ranges.

use crate::error::{invalid, Result};

pub use libm::{erf, erfc};

/// log Γ(x).
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Digamma ψ(z) = Γ'(z)/Γ(z) for z > 0, absolute accuracy ≈ 1e-14.
pub fn digamma(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(invalid(format!("digamma requires z > 0, got {z}")));
    }
    Ok(digamma_unchecked(z))
}

pub(crate) fn digamma_unchecked(mut z: f64) -> f64 {
    let mut acc = 0.0;
    while z < 10.0 {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // Bernoulli tail: B_{2k} / (2k z^{2k}) for k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + z.ln() - 0.5 * inv - series
}

/// Trigamma ψ'(z) for z > 0.
pub fn trigamma(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(invalid(format!("trigamma requires z > 0, got {z}")));
    }
    let mut z = z;
    let mut acc = 0.0;
    while z < 10.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0
                        - inv2
                            * (1.0 / 42.0
                                - inv2
                                    * (1.0 / 30.0
                                        - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    Ok(acc + series)
}

/// Scaled complementary error function e^{x²}·erfc(x), stable for large x.
pub fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        if x < -26.0 {
            return f64::INFINITY;
        }
        (x * x).exp() * erfc(x)
    } else {
        let inv2 = 1.0 / (x * x);
        let poly = 1.0 - 0.5 * inv2 * (1.0 - 1.5 * inv2 * (1.0 - 2.5 * inv2 * (1.0 - 3.5 * inv2)));
        poly / (x * std::f64::consts::PI.sqrt())
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}
