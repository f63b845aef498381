//! Standard normal CDF in linear and log form.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `Phi(z)`.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// `ln Phi(z)`, finite for any finite `z`.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z > 5.0 {
        (-0.5 * erfc(z * FRAC_1_SQRT_2)).ln_1p()
    } else if z > -30.0 {
        norm_cdf(z).ln()
    } else {
        // Mills-ratio asymptotic series; terms below 1e-16 by the 8th at z <= -30.
        let w = 1.0 / (z * z);
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..=8 {
            term *= -((2 * k - 1) as f64) * w;
            series += term;
        }
        -0.5 * z * z - (-z).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}
