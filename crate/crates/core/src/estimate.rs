//! Maximum-likelihood estimation of `theta = (sigma, v2..vD)` from joint
//! time/position observations, empirical Fisher information, and
//! Cramer-Rao comparisons. The release offset `x0` is treated as known.
//!
//! The score equations decouple: setting the drift components to zero gives
//! `v_hat = sum(x_i - x0) / sum(t_i)` independently of sigma, and the sigma
//! equation then gives
//! `sigma_hat^2 = sum([(1 - t_i)^2 + |x_i - x0 - v_hat t_i|^2] / t_i) / (D n)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{fim_closed_form, log_joint_pdf, score, FimMatrix};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::rng::derive_key;
use crate::simulate::{
    simulate, Arrivals, CrossingMode, SimResult, SimSpec, CENSORING_WARN_FRACTION,
};
use crate::sum::Compensated;

/// Below this `sigma_hat^2` the sample is treated as noise-free.
const DEGENERATE_SIGMA_SQ: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// `(sigma_hat, v2_hat, ..., vD_hat)`.
    pub theta_hat: Vec<f64>,
    pub n_samples: usize,
    pub loglik_at_hat: f64,
    /// Closed-form CRLB at `theta_hat` for `n_samples` observations.
    pub crlb_diag: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn check_origin(samples: &Arrivals, lateral_origin: &[f64]) -> Result<()> {
    if lateral_origin.len() != samples.dim() - 1 {
        return Err(Error::Domain(format!(
            "release offset has length {}, expected {}",
            lateral_origin.len(),
            samples.dim() - 1
        )));
    }
    Ok(())
}

/// Closed-form joint MLE.
pub fn mle(samples: &Arrivals, lateral_origin: &[f64]) -> Result<Estimate> {
    check_origin(samples, lateral_origin)?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateSample {
            reason: format!("need at least 2 samples, got {n}"),
            lateral_drift_hat: Vec::new(),
        });
    }
    let dim = samples.dim();
    let m = dim - 1;

    let total_time: Compensated = samples.times().iter().copied().collect();
    let drift_hat: Vec<f64> = (0..m)
        .map(|k| {
            let disp: Compensated = samples
                .iter()
                .map(|s| s.lateral[k] - lateral_origin[k])
                .collect();
            disp.value() / total_time.value()
        })
        .collect();

    let quad: Compensated = samples
        .iter()
        .map(|s| {
            let t = s.time;
            let lateral: f64 = (0..m)
                .map(|k| {
                    let d = s.lateral[k] - lateral_origin[k] - drift_hat[k] * t;
                    d * d
                })
                .sum();
            ((1.0 - t) * (1.0 - t) + lateral) / t
        })
        .collect();
    let sigma_sq = quad.value() / (dim * n) as f64;
    if !(sigma_sq > DEGENERATE_SIGMA_SQ) || !sigma_sq.is_finite() {
        return Err(Error::DegenerateSample {
            reason: format!("all residuals vanish (sigma_hat^2 = {sigma_sq:e})"),
            lateral_drift_hat: drift_hat,
        });
    }

    let params = ChannelParams::new(dim, sigma_sq.sqrt(), drift_hat, lateral_origin.to_vec())?;
    let loglik: Compensated = samples
        .iter()
        .map(|s| log_joint_pdf(s.time, s.lateral, &params))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    Ok(Estimate {
        theta_hat: params.theta(),
        n_samples: n,
        loglik_at_hat: loglik.value(),
        crlb_diag: crlb_report(&params, n as u64)?,
        warnings: Vec::new(),
    })
}

/// [`mle`] on a simulation's arrivals; censored particles are dropped and a
/// warning is attached when the censored fraction is material.
pub fn mle_from_result(r: &SimResult) -> Result<Estimate> {
    let mut est = mle(&r.arrivals, r.params.lateral_origin())?;
    if let Some(w) = censoring_warning(r.censored_fraction()) {
        est.warnings.push(w);
    }
    Ok(est)
}

pub fn censoring_warning(censored_fraction: f64) -> Option<String> {
    (censored_fraction > CENSORING_WARN_FRACTION).then(|| {
        format!(
            "{:.4}% of particles were censored at the horizon and excluded; estimates are biased",
            100.0 * censored_fraction
        )
    })
}

/// Score summed over a sample set at `p`.
pub fn summed_score(samples: &Arrivals, p: &ChannelParams) -> Result<Vec<f64>> {
    let mut acc = vec![Compensated::default(); p.dim()];
    for s in samples.iter() {
        for (a, g) in acc.iter_mut().zip(score(s.time, s.lateral, p)?) {
            a.add(g);
        }
    }
    Ok(acc.iter().map(Compensated::value).collect())
}

/// `(1/n) sum_i score_i score_i^T`.
pub fn empirical_fim(samples: &Arrivals, p: &ChannelParams) -> Result<FimMatrix> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if samples.dim() != p.dim() {
        return Err(Error::Domain(format!(
            "samples have dimension {}, parameters {}",
            samples.dim(),
            p.dim()
        )));
    }
    let d = p.dim();
    let mut acc = vec![Compensated::default(); d * d];
    for s in samples.iter() {
        let g = score(s.time, s.lateral, p)?;
        for i in 0..d {
            for j in 0..d {
                acc[i * d + j].add(g[i] * g[j]);
            }
        }
    }
    let n = samples.len() as f64;
    let rows: Vec<Vec<f64>> = acc
        .chunks(d)
        .map(|row| row.iter().map(|c| c.value() / n).collect())
        .collect();
    Ok(FimMatrix::from_rows(&rows))
}

/// Names of the components of `theta`: `sigma`, `v2`, ..., `vD`.
pub fn parameter_names(dim: usize) -> Vec<String> {
    std::iter::once("sigma".to_string())
        .chain((2..=dim).map(|k| format!("v{k}")))
        .collect()
}

/// Per-parameter variance bound for `n` observations:
/// `(sigma^2 / (2 D n), sigma^2 / n, ..., sigma^2 / n)`.
pub fn crlb_report(p: &ChannelParams, n: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("CRLB needs at least one observation".into()));
    }
    Ok(fim_closed_form(p)
        .diagonal()
        .iter()
        .map(|info| 1.0 / (info * n as f64))
        .collect())
}

/// Sigma MLE from arrival times alone (inverse Gaussian scale):
/// `sigma_hat^2 = (1/n) sum (1 - t_i)^2 / t_i`.
pub fn time_only_sigma(times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::EmptySample);
    }
    let q: Compensated = times.iter().map(|t| (1.0 - t) * (1.0 - t) / t).collect();
    Ok((q.value() / times.len() as f64).sqrt())
}

/// Gradient of the time-only log-likelihood `log f_T(t)` with respect to
/// the full `theta`. The lateral drift components are identically zero:
/// arrival times carry no information about lateral drift.
pub fn time_only_score(t: f64, p: &ChannelParams) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let sigma = p.sigma();
    let mut g = vec![0.0; p.dim()];
    g[0] = -1.0 / sigma + (1.0 - t) * (1.0 - t) / (sigma * sigma * sigma * t);
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub n_per_trial: u64,
    pub n_trials: u64,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub crossing: CrossingMode,
}

impl StudySpec {
    /// Long horizon and bridge crossing so that censoring and
    /// discretization bias stay well below the Monte Carlo noise.
    pub fn new(n_per_trial: u64, n_trials: u64, seed: u64) -> Self {
        Self {
            n_per_trial,
            n_trials,
            seed,
            dt: 1e-3,
            horizon: 50.0,
            crossing: CrossingMode::BridgeCorrected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub param: String,
    pub emp_var: f64,
    pub crlb: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub params: ChannelParams,
    pub spec: StudySpec,
    /// `sigma`, `v2`..`vD`, then `sigma_time_only`.
    pub rows: Vec<StudyRow>,
    /// `var(sigma_hat_time_only) / var(sigma_hat_joint)`; about `D`.
    pub time_only_to_joint_variance_ratio: f64,
    pub mean_theta_hat: Vec<f64>,
    pub mean_sigma_time_only: f64,
    pub max_censored_fraction: f64,
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

struct Trial {
    theta_hat: Vec<f64>,
    sigma_time_only: f64,
    censored_fraction: f64,
}

/// Runs independent simulate-then-estimate trials and compares the
/// across-trial variance of each estimate with the CRLB for
/// `n_per_trial` observations.
pub fn efficiency_study(p: &ChannelParams, spec: &StudySpec) -> Result<StudyReport> {
    if spec.n_trials < 2 {
        return Err(Error::InvalidConfig(
            "efficiency study needs at least 2 trials".into(),
        ));
    }
    let trials: Vec<Trial> = (0..spec.n_trials)
        .into_par_iter()
        .map(|trial| {
            let sim = SimSpec::new(
                spec.n_per_trial,
                spec.dt,
                spec.horizon,
                derive_key(spec.seed, trial),
            )
            .with_crossing(spec.crossing);
            let r = simulate(p, &sim)?;
            let est = mle(&r.arrivals, p.lateral_origin())?;
            Ok(Trial {
                theta_hat: est.theta_hat,
                sigma_time_only: time_only_sigma(r.arrivals.times())?,
                censored_fraction: r.censored_fraction(),
            })
        })
        .collect::<Result<_>>()?;

    let crlb = crlb_report(p, spec.n_per_trial)?;
    let names = parameter_names(p.dim());
    let mut rows = Vec::new();
    let mut mean_theta_hat = Vec::new();
    for (i, name) in names.into_iter().enumerate() {
        let xs: Vec<f64> = trials.iter().map(|t| t.theta_hat[i]).collect();
        mean_theta_hat.push(xs.iter().sum::<f64>() / xs.len() as f64);
        let emp_var = sample_variance(&xs);
        rows.push(StudyRow {
            param: name,
            emp_var,
            crlb: crlb[i],
            ratio: emp_var / crlb[i],
        });
    }
    let time_only: Vec<f64> = trials.iter().map(|t| t.sigma_time_only).collect();
    let time_only_var = sample_variance(&time_only);
    // Time-only information per observation is the D = 1 case, 2 / sigma^2.
    let time_only_crlb = p.sigma_sq() / (2.0 * spec.n_per_trial as f64);
    rows.push(StudyRow {
        param: "sigma_time_only".into(),
        emp_var: time_only_var,
        crlb: time_only_crlb,
        ratio: time_only_var / time_only_crlb,
    });
    let max_censored_fraction = trials
        .iter()
        .map(|t| t.censored_fraction)
        .fold(0.0, f64::max);
    if let Some(w) = censoring_warning(max_censored_fraction) {
        log::warn!("{w}");
    }
    Ok(StudyReport {
        params: p.clone(),
        spec: spec.clone(),
        time_only_to_joint_variance_ratio: time_only_var / rows[0].emp_var,
        rows,
        mean_theta_hat,
        mean_sigma_time_only: time_only.iter().sum::<f64>() / time_only.len() as f64,
        max_censored_fraction,
    })
}
