//! Empirical-versus-model comparison of arrival histograms.
//!
//! The reference is the arrival law conditioned on `T <= horizon`. Model
//! bin probabilities integrate the time density numerically and the
//! lateral Gaussian exactly (through the normal CDF), since given `T = t`
//! each lateral coordinate is `N(x0 + v t, sigma^2 t)`. For `D > 2` the
//! histogram is over `(t, x_k)` for one chosen lateral axis, which is the
//! exact marginal.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::analytic::{fat_cdf, fat_pdf, joint_pdf};
use crate::channel::ChannelParams;
use crate::error::{domain, Error, Result};
use crate::quad::integrate_vec;
use crate::simulate::Arrivals;
use crate::special::norm_cdf;

/// Minimum expected count per chi-square cell.
pub const MIN_EXPECTED: f64 = 5.0;

/// Default time-bin width of the reproduction grid.
pub const DEFAULT_T_BIN: f64 = 0.05;
/// Default number of lateral bins across `+-4` standard deviations at `t = 1`.
pub const DEFAULT_X_BINS: usize = 20;

/// Counts over `(t, x)` cells; times bin as `(lo, hi]`, positions as `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub t_edges: Vec<f64>,
    pub x_edges: Vec<f64>,
    /// Row-major, one row per time bin.
    pub counts: Vec<u64>,
    /// Samples inside the grid.
    pub total: u64,
    /// Samples outside the grid.
    pub dropped: u64,
    /// Lateral axis binned (0 for `x2`).
    pub axis: usize,
}

fn check_edges(name: &str, edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(domain(format!("{name} needs at least two edges")));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain(format!(
            "{name} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

impl Histogram2D {
    pub fn new(t_edges: Vec<f64>, x_edges: Vec<f64>, axis: usize) -> Result<Self> {
        check_edges("t_edges", &t_edges)?;
        check_edges("x_edges", &x_edges)?;
        let cells = (t_edges.len() - 1) * (x_edges.len() - 1);
        Ok(Self {
            t_edges,
            x_edges,
            counts: vec![0; cells],
            total: 0,
            dropped: 0,
            axis,
        })
    }

    pub fn n_t(&self) -> usize {
        self.t_edges.len() - 1
    }

    pub fn n_x(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n_x() + j]
    }

    /// Bins one observation; returns whether it fell inside the grid.
    pub fn add(&mut self, t: f64, x: f64) -> bool {
        let i = self.t_edges.partition_point(|&e| e < t);
        let j = self.x_edges.partition_point(|&e| e <= x);
        if i == 0 || i >= self.t_edges.len() || j == 0 || j >= self.x_edges.len() {
            self.dropped += 1;
            return false;
        }
        let nx = self.n_x();
        self.counts[(i - 1) * nx + (j - 1)] += 1;
        self.total += 1;
        true
    }

    /// Adds another histogram on the same grid.
    pub fn merge(&mut self, other: &Histogram2D) -> Result<()> {
        if self.t_edges != other.t_edges || self.x_edges != other.x_edges || self.axis != other.axis
        {
            return Err(domain("cannot merge histograms on different grids"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.dropped += other.dropped;
        Ok(())
    }

    pub fn n_samples(&self) -> u64 {
        self.total + self.dropped
    }
}

/// Bins arrivals over time and lateral coordinate `axis`.
pub fn build_histogram(
    samples: &Arrivals,
    t_edges: &[f64],
    x_edges: &[f64],
    axis: usize,
) -> Result<Histogram2D> {
    if axis + 1 >= samples.dim() {
        return Err(domain(format!(
            "lateral axis {axis} does not exist for dimension {}",
            samples.dim()
        )));
    }
    let empty = Histogram2D::new(t_edges.to_vec(), x_edges.to_vec(), axis)?;
    let h = (0..samples.len())
        .into_par_iter()
        .with_min_len(4096)
        .fold(
            || empty.clone(),
            |mut h, i| {
                let s = samples.get(i);
                h.add(s.time, s.lateral[axis]);
                h
            },
        )
        .reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b).expect("same grid");
                a
            },
        );
    Ok(h)
}

/// Joint density conditioned on arrival by `horizon`.
pub fn conditional_joint_pdf(t: f64, x: &[f64], p: &ChannelParams, horizon: f64) -> Result<f64> {
    if t > horizon {
        return Err(domain(format!("t = {t} lies beyond the horizon {horizon}")));
    }
    Ok(joint_pdf(t, x, p)? / fat_cdf(horizon, p)?)
}

/// `Phi(b) - Phi(a)` for `a <= b`, evaluated on the side with less cancellation.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        norm_cdf(-a) - norm_cdf(-b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    }
}

/// Model probabilities of a histogram grid, conditional on `T <= horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinModel {
    pub t_edges: Vec<f64>,
    pub x_edges: Vec<f64>,
    /// Row-major like [`Histogram2D::counts`].
    pub probs: Vec<f64>,
    /// Probability of landing outside the grid.
    pub overflow: f64,
}

/// Integrates the conditional joint law over every cell of the grid.
pub fn bin_probabilities(
    t_edges: &[f64],
    x_edges: &[f64],
    axis: usize,
    p: &ChannelParams,
    horizon: f64,
) -> Result<BinModel> {
    check_edges("t_edges", t_edges)?;
    check_edges("x_edges", x_edges)?;
    if axis + 1 >= p.dim() {
        return Err(domain(format!(
            "lateral axis {axis} does not exist for dimension {}",
            p.dim()
        )));
    }
    if !(horizon > 0.0) {
        return Err(domain("horizon must be positive"));
    }
    let norm = fat_cdf(horizon, p)?;
    let sigma = p.sigma();
    let x0 = p.lateral_origin()[axis];
    let v = p.lateral_drift()[axis];
    let nx = x_edges.len() - 1;

    let rows: Vec<Vec<f64>> = t_edges
        .par_windows(2)
        .map(|w| {
            let lo = w[0].max(0.0);
            let hi = w[1].min(horizon);
            if hi <= lo {
                return vec![0.0; nx];
            }
            let integrand = |t: f64, out: &mut [f64]| {
                if t <= 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return;
                }
                let density = fat_pdf(t, p).unwrap_or(0.0);
                let mean = x0 + v * t;
                let scale = sigma * t.sqrt();
                for (j, o) in out.iter_mut().enumerate() {
                    let a = (x_edges[j] - mean) / scale;
                    let b = (x_edges[j + 1] - mean) / scale;
                    *o = density * normal_mass(a, b);
                }
            };
            integrate_vec(integrand, lo, hi, nx, 4, 1e-14)
                .into_iter()
                .map(|v| v / norm)
                .collect()
        })
        .collect();
    let probs = rows.concat();
    let overflow = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    Ok(BinModel {
        t_edges: t_edges.to_vec(),
        x_edges: x_edges.to_vec(),
        probs,
        overflow,
    })
}

/// Fig-reproduction grid: 0.05-wide time bins up to the horizon, and
/// [`DEFAULT_X_BINS`] lateral bins spanning `+-4 sigma` around the lateral
/// mean at `t = 1`.
pub fn default_grid(p: &ChannelParams, horizon: f64, axis: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if axis + 1 >= p.dim() {
        return Err(domain(format!(
            "lateral axis {axis} does not exist for dimension {}",
            p.dim()
        )));
    }
    let n_t = (horizon / DEFAULT_T_BIN - 1e-9).ceil().max(1.0) as usize;
    let t_edges = (0..=n_t).map(|k| k as f64 * DEFAULT_T_BIN).collect();
    let center = p.lateral_origin()[axis] + p.lateral_drift()[axis];
    let half = 4.0 * p.sigma();
    let width = 2.0 * half / DEFAULT_X_BINS as f64;
    let x_edges = (0..=DEFAULT_X_BINS)
        .map(|j| center - half + j as f64 * width)
        .collect();
    Ok((t_edges, x_edges))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub chi2_stat: f64,
    pub dof: usize,
    pub p_value: f64,
    pub total_variation: f64,
    /// Chi-square cells after merging.
    pub n_cells: usize,
    pub n_samples: u64,
    pub dropped: u64,
}

/// Pearson chi-square and total variation of a histogram against the
/// conditional model on the same grid. Parameters are treated as known.
pub fn gof_report(h: &Histogram2D, p: &ChannelParams, horizon: f64) -> Result<GofReport> {
    let model = bin_probabilities(&h.t_edges, &h.x_edges, h.axis, p, horizon)?;
    gof_against(h, &model)
}

/// [`gof_report`] with precomputed model probabilities.
pub fn gof_against(h: &Histogram2D, model: &BinModel) -> Result<GofReport> {
    if h.t_edges != model.t_edges || h.x_edges != model.x_edges {
        return Err(domain("histogram and model grids differ"));
    }
    let observed: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    pearson_gof(&observed, h.dropped as f64, h.n_x(), model)
}

/// Chi-square and total variation from raw (possibly fractional) cell
/// counts. Cells are merged greedily, smallest expectation first into its
/// smallest-expectation neighbour, until each holds at least
/// [`MIN_EXPECTED`]. The out-of-grid cell neighbours every border cell.
pub fn pearson_gof(
    observed: &[f64],
    observed_overflow: f64,
    n_x: usize,
    model: &BinModel,
) -> Result<GofReport> {
    let n_cells = model.probs.len();
    if observed.len() != n_cells || n_x == 0 || !n_cells.is_multiple_of(n_x) {
        return Err(domain("observed counts do not match the model grid"));
    }
    let n_t = n_cells / n_x;
    let n: f64 = observed.iter().sum::<f64>() + observed_overflow;
    if n * (1.0 - 1e-12) < MIN_EXPECTED {
        return Err(Error::CannotTest(format!("only {n} samples")));
    }

    let overflow_id = n_cells;
    let mut expected: Vec<f64> = model.probs.iter().map(|q| q * n).collect();
    expected.push(model.overflow * n);
    let mut obs: Vec<f64> = observed.to_vec();
    obs.push(observed_overflow);
    let mut prob: Vec<f64> = model.probs.clone();
    prob.push(model.overflow);

    let mut neighbours: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_cells + 1];
    for i in 0..n_t {
        for j in 0..n_x {
            let id = i * n_x + j;
            if i + 1 < n_t {
                neighbours[id].insert(id + n_x);
                neighbours[id + n_x].insert(id);
            }
            if j + 1 < n_x {
                neighbours[id].insert(id + 1);
                neighbours[id + 1].insert(id);
            }
            if i == 0 || j == 0 || i + 1 == n_t || j + 1 == n_x {
                neighbours[id].insert(overflow_id);
                neighbours[overflow_id].insert(id);
            }
        }
    }
    let mut alive = vec![true; n_cells + 1];
    let mut n_alive = n_cells + 1;

    loop {
        let smallest = (0..=n_cells)
            .filter(|&g| alive[g])
            .min_by(|&a, &b| expected[a].total_cmp(&expected[b]).then(a.cmp(&b)));
        let Some(g) = smallest else { break };
        if expected[g] >= MIN_EXPECTED {
            break;
        }
        let Some(target) = neighbours[g]
            .iter()
            .copied()
            .min_by(|&a, &b| expected[a].total_cmp(&expected[b]).then(a.cmp(&b)))
        else {
            break;
        };
        // fold g into target
        expected[target] += expected[g];
        obs[target] += obs[g];
        prob[target] += prob[g];
        let moved = std::mem::take(&mut neighbours[g]);
        for nb in moved {
            neighbours[nb].remove(&g);
            if nb != target {
                neighbours[nb].insert(target);
                neighbours[target].insert(nb);
            }
        }
        alive[g] = false;
        n_alive -= 1;
    }

    let groups: Vec<usize> = (0..=n_cells).filter(|&g| alive[g]).collect();
    if n_alive < 2 || groups.iter().any(|&g| expected[g] < MIN_EXPECTED) {
        return Err(Error::CannotTest(format!(
            "{n_alive} cells remain after merging to {MIN_EXPECTED} expected counts"
        )));
    }
    let chi2_stat: f64 = groups
        .iter()
        .map(|&g| (obs[g] - expected[g]).powi(2) / expected[g])
        .sum();
    let total_variation = 0.5
        * groups
            .iter()
            .map(|&g| (obs[g] / n - prob[g]).abs())
            .sum::<f64>();
    let dof = groups.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map_err(|e| Error::CannotTest(e.to_string()))?
        .sf(chi2_stat);
    Ok(GofReport {
        chi2_stat,
        dof,
        p_value,
        total_variation,
        n_cells: groups.len(),
        n_samples: n.round() as u64,
        dropped: observed_overflow.round() as u64,
    })
}
