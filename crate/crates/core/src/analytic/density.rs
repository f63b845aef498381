//! Closed-form first-arrival densities and the log-likelihood score.
//!
//! The arrival time `T` is inverse Gaussian `IG(1, 1/sigma^2)` and, given
//! `T = t`, the lateral arrival position is Gaussian with mean
//! `x0 + v t` and covariance `sigma^2 t I`. Densities are over
//! `(t, x2..xD)` on the receiver plane; the absorbed coordinate never
//! appears.

use std::f64::consts::{LN_2, PI};

use super::bessel::{bessel_k_scaled, BesselOrder};
use crate::channel::ChannelParams;
use crate::error::{domain, Result};
use crate::special::{log_norm_cdf, norm_cdf};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(domain(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

fn check_lateral(x: &[f64], p: &ChannelParams) -> Result<()> {
    if x.len() != p.dim() - 1 {
        return Err(domain(format!(
            "lateral position has length {}, expected {}",
            x.len(),
            p.dim() - 1
        )));
    }
    Ok(())
}

/// `x - x0 - v t`, the lateral residual at time `t`.
pub fn lateral_residual(t: f64, x: &[f64], p: &ChannelParams) -> Vec<f64> {
    x.iter()
        .zip(p.lateral_origin())
        .zip(p.lateral_drift())
        .map(|((xi, x0), v)| xi - x0 - v * t)
        .collect()
}

fn residual_sq(t: f64, x: &[f64], p: &ChannelParams) -> f64 {
    x.iter()
        .zip(p.lateral_origin())
        .zip(p.lateral_drift())
        .map(|((xi, x0), v)| {
            let d = xi - x0 - v * t;
            d * d
        })
        .sum()
}

/// Inverse Gaussian first-arrival-time density.
pub fn fat_pdf(t: f64, p: &ChannelParams) -> Result<f64> {
    check_time(t)?;
    let s2 = p.sigma_sq();
    let norm = (2.0 * PI * s2 * t * t * t).sqrt();
    Ok((-(1.0 - t) * (1.0 - t) / (2.0 * s2 * t)).exp() / norm)
}

pub fn log_fat_pdf(t: f64, p: &ChannelParams) -> Result<f64> {
    check_time(t)?;
    let s2 = p.sigma_sq();
    Ok(-0.5 * (LN_2PI + s2.ln() + 3.0 * t.ln()) - (1.0 - t) * (1.0 - t) / (2.0 * s2 * t))
}

/// `P(T <= t)`. The `exp(2/sigma^2) Phi(.)` term is combined in log space.
pub fn fat_cdf(t: f64, p: &ChannelParams) -> Result<f64> {
    check_time(t)?;
    let s2 = p.sigma_sq();
    let scale = p.sigma() * t.sqrt();
    let lower = norm_cdf((t - 1.0) / scale);
    let reflected = (2.0 / s2 + log_norm_cdf(-(t + 1.0) / scale)).exp();
    Ok((lower + reflected).min(1.0))
}

/// Gaussian density of the lateral position at time `t`; 1 when `D = 1`.
pub fn lateral_pdf(x: &[f64], t: f64, p: &ChannelParams) -> Result<f64> {
    Ok(log_lateral_pdf(x, t, p)?.exp())
}

pub fn log_lateral_pdf(x: &[f64], t: f64, p: &ChannelParams) -> Result<f64> {
    check_time(t)?;
    check_lateral(x, p)?;
    if x.is_empty() {
        return Ok(0.0);
    }
    let var = p.sigma_sq() * t;
    let m = x.len() as f64;
    Ok(-0.5 * m * (LN_2PI + var.ln()) - residual_sq(t, x, p) / (2.0 * var))
}

/// Joint density of `(T, X_T)`:
/// `(2 pi sigma^2)^{-D/2} t^{-D/2-1} exp(-[(1-t)^2 + |x - x0 - v t|^2] / (2 sigma^2 t))`.
pub fn joint_pdf(t: f64, x: &[f64], p: &ChannelParams) -> Result<f64> {
    check_time(t)?;
    check_lateral(x, p)?;
    let s2 = p.sigma_sq();
    let half_d = p.dim() as f64 / 2.0;
    let quad = (1.0 - t) * (1.0 - t) + residual_sq(t, x, p);
    Ok((2.0 * PI * s2).powf(-half_d) * t.powf(-half_d - 1.0) * (-quad / (2.0 * s2 * t)).exp())
}

/// Log-likelihood of one observation.
pub fn log_joint_pdf(t: f64, x: &[f64], p: &ChannelParams) -> Result<f64> {
    check_time(t)?;
    check_lateral(x, p)?;
    let s2 = p.sigma_sq();
    let half_d = p.dim() as f64 / 2.0;
    let quad = (1.0 - t) * (1.0 - t) + residual_sq(t, x, p);
    Ok(-half_d * (LN_2PI + s2.ln()) - (half_d + 1.0) * t.ln() - quad / (2.0 * s2 * t))
}

/// First-arrival-position density on the receiver plane,
/// `2 (|v| / 2 pi sigma^2)^{D/2} exp(v.r / sigma^2) K_{D/2}(|v||r| / sigma^2) / |r|^{D/2}`
/// with `v = (1, v2..vD)` and `r = (1, x - x0)`.
pub fn fap_pdf(x: &[f64], p: &ChannelParams) -> Result<f64> {
    Ok(log_fap_pdf(x, p)?.exp())
}

pub fn log_fap_pdf(x: &[f64], p: &ChannelParams) -> Result<f64> {
    check_lateral(x, p)?;
    let s2 = p.sigma_sq();
    let half_d = p.dim() as f64 / 2.0;
    let v = p.lateral_drift();
    let r: Vec<f64> = x
        .iter()
        .zip(p.lateral_origin())
        .map(|(a, b)| a - b)
        .collect();
    let v_norm = p.drift_norm();
    let r_norm = (1.0 + r.iter().map(|c| c * c).sum::<f64>()).sqrt();
    let dot = 1.0 + v.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
    let z = v_norm * r_norm / s2;

    // dot - |v||r| <= 0 cancels badly near the drift axis; use Lagrange's
    // identity |v|^2 |r|^2 - (v.r)^2 = sum_{i<j} (v_i r_j - v_j r_i)^2.
    let gap = if dot > 0.0 {
        let full_v = std::iter::once(1.0)
            .chain(v.iter().copied())
            .collect::<Vec<_>>();
        let full_r = std::iter::once(1.0)
            .chain(r.iter().copied())
            .collect::<Vec<_>>();
        let mut cross = 0.0;
        for i in 0..full_v.len() {
            for j in i + 1..full_v.len() {
                let c = full_v[i] * full_r[j] - full_v[j] * full_r[i];
                cross += c * c;
            }
        }
        -cross / (v_norm * r_norm + dot)
    } else {
        dot - v_norm * r_norm
    };

    let order = BesselOrder::half_dim(p.dim())?;
    let k_scaled = bessel_k_scaled(order, z)?;
    Ok(
        LN_2 + half_d * (v_norm / (2.0 * PI * s2)).ln() + gap / s2 + k_scaled.ln()
            - half_d * r_norm.ln(),
    )
}

/// Gradient of [`log_joint_pdf`] with respect to `theta = (sigma, v2..vD)`:
/// `-D/sigma + [(1-t)^2 + |Delta|^2] / (sigma^3 t)` then `Delta_k / sigma^2`.
pub fn score(t: f64, x: &[f64], p: &ChannelParams) -> Result<Vec<f64>> {
    check_time(t)?;
    check_lateral(x, p)?;
    let sigma = p.sigma();
    let s2 = sigma * sigma;
    let delta = lateral_residual(t, x, p);
    let quad = (1.0 - t) * (1.0 - t) + delta.iter().map(|d| d * d).sum::<f64>();
    let mut out = Vec::with_capacity(p.dim());
    out.push(-(p.dim() as f64) / sigma + quad / (s2 * sigma * t));
    out.extend(delta.iter().map(|d| d / s2));
    Ok(out)
}
