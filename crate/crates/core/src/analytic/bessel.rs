//! Modified Bessel functions of the second kind for the orders `D/2` that
//! the first-arrival-position density needs.
//!
//! Half-integer orders start from the closed forms of `K_{1/2}` and
//! `K_{3/2}`. Integer orders start from `K_0`, `K_1`: power series for
//! `z <= 2`, Steed's continued fraction (CF2) above. Both families then use
//! the upward recurrence `K_{v+1} = K_{v-1} + (2v/z) K_v`, which is stable
//! for `K`. Everything is computed in the exponentially scaled form
//! `e^z K_v(z)`.

use std::f64::consts::PI;

use crate::error::{domain, Result};

/// Largest supported `2 * nu`.
pub const MAX_TWICE_ORDER: u32 = 16;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Order `nu` stored as `2 * nu`, so integers and half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BesselOrder(u32);

impl BesselOrder {
    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice > MAX_TWICE_ORDER {
            return Err(domain(format!(
                "Bessel order {} unsupported (max {})",
                twice as f64 / 2.0,
                MAX_TWICE_ORDER / 2
            )));
        }
        Ok(Self(twice))
    }

    /// Order `D/2` for spatial dimension `D`.
    pub fn half_dim(dim: usize) -> Result<Self> {
        Self::from_twice(u32::try_from(dim).unwrap_or(u32::MAX))
    }

    /// Accepts only integers and half-integers.
    pub fn from_f64(nu: f64) -> Result<Self> {
        let twice = 2.0 * nu;
        if !(twice >= 0.0) || twice.fract() != 0.0 {
            return Err(domain(format!(
                "Bessel order {nu} is not a non-negative half-integer"
            )));
        }
        Self::from_twice(twice as u32)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn twice(self) -> u32 {
        self.0
    }
}

/// `K_nu(z)`.
pub fn bessel_k(order: BesselOrder, z: f64) -> Result<f64> {
    Ok(bessel_k_scaled(order, z)? * (-z).exp())
}

/// `ln K_nu(z)`, finite where `K_nu` itself under- or overflows.
pub fn log_bessel_k(order: BesselOrder, z: f64) -> Result<f64> {
    Ok(bessel_k_scaled(order, z)?.ln() - z)
}

/// `e^z K_nu(z)`.
pub fn bessel_k_scaled(order: BesselOrder, z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain(format!(
            "Bessel K argument must be positive and finite, got {z}"
        )));
    }
    let (mut lower, mut upper, mut nu) = if order.0 % 2 == 1 {
        let k_half = (PI / (2.0 * z)).sqrt();
        (k_half, k_half * (1.0 + 1.0 / z), 0.5)
    } else {
        let (k0, k1) = scaled_k0_k1(z);
        (k0, k1, 0.0)
    };
    if order.0 as f64 == 2.0 * nu {
        return Ok(lower);
    }
    // lower = K_nu, upper = K_{nu+1}
    while 2.0 * (nu + 1.0) < order.0 as f64 {
        let next = lower + 2.0 * (nu + 1.0) / z * upper;
        lower = upper;
        upper = next;
        nu += 1.0;
    }
    Ok(upper)
}

/// `(e^z K_0(z), e^z K_1(z))`.
fn scaled_k0_k1(z: f64) -> (f64, f64) {
    if z <= 2.0 {
        let (k0, k1) = k0_k1_series(z);
        let e = z.exp();
        (k0 * e, k1 * e)
    } else {
        k0_k1_steed(z)
    }
}

fn k0_k1_series(z: f64) -> (f64, f64) {
    let q = 0.25 * z * z;
    let log_half = (0.5 * z).ln();
    // term_k = q^k / (k!)^2 ; term1_k = q^k / (k! (k+1)!)
    let mut term = 1.0;
    let mut term1 = 1.0;
    let mut harmonic = 0.0;
    let mut i0 = 1.0;
    let mut i1_over_half_z = 1.0;
    let mut k0_tail = 0.0;
    // sum_k (psi(k+1) + psi(k+2)) q^k / (k!(k+1)!) with psi(m+1) = -gamma + H_m
    let mut k1_tail = -2.0 * EULER_GAMMA + 1.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        term1 *= q / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        i0 += term;
        i1_over_half_z += term1;
        k0_tail += harmonic * term;
        k1_tail += (2.0 * (harmonic - EULER_GAMMA) + 1.0 / (kf + 1.0)) * term1;
        if term1 < 1e-18 * i1_over_half_z && term < 1e-18 * i0 {
            break;
        }
    }
    let i1 = 0.5 * z * i1_over_half_z;
    let k0 = -(log_half + EULER_GAMMA) * i0 + k0_tail;
    let k1 = 1.0 / z + log_half * i1 - 0.25 * z * k1_tail;
    (k0, k1)
}

/// Steed's algorithm for the CF2 continued fraction at order 0 (valid for z >= 2).
fn k0_k1_steed(z: f64) -> (f64, f64) {
    const EPS: f64 = 1e-17;
    let a1 = 0.25;
    let mut b = 2.0 * (1.0 + z);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * z)).sqrt() / s;
    let k1 = k0 * (z + 0.5 - h) / z;
    (k0, k1)
}
