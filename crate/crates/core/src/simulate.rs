//! Particle simulation of `dX = v dt + sigma dB` with an absorbing plane at
//! `x1 = 1`, by Euler-Maruyama in dimensionless units.
//!
//! Particles are i.i.d. replicas released from `(0, x0)`. Each particle's
//! noise comes from its own counter-based stream keyed by
//! `(seed, particle, step)`, and results are merged in particle order, so
//! the output is bit-identical for any thread count.

use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ArrivalSample, ChannelParams, MAX_DIM};
use crate::error::{Error, Result};
use crate::rng::{derive_key, CounterRng};

/// Default cap on `n_particles * n_steps`.
pub const DEFAULT_STEP_CAP: u64 = 100_000_000_000;

const BLOCK: u64 = 2048;

/// Bridge crossing probabilities below `exp(-BRIDGE_CUTOFF)` are treated as 0.
const BRIDGE_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CrossingMode {
    /// Absorb at the first step whose endpoint has `x1 >= 1`; record the
    /// step-end time and position.
    #[default]
    #[serde(rename = "step-end")]
    StepEnd,
    /// Also absorb inside a step with the Brownian-bridge crossing
    /// probability `exp(-2 (1 - a)(1 - b) / (sigma^2 dt))`; record the step
    /// midpoint and the interpolated lateral position.
    #[serde(rename = "bridge")]
    BridgeCorrected,
}

impl std::str::FromStr for CrossingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step-end" => Ok(Self::StepEnd),
            "bridge" | "bridge-corrected" => Ok(Self::BridgeCorrected),
            other => Err(Error::InvalidConfig(format!(
                "unknown crossing mode `{other}` (expected step-end or bridge)"
            ))),
        }
    }
}

impl std::fmt::Display for CrossingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::StepEnd => "step-end",
            Self::BridgeCorrected => "bridge",
        })
    }
}

/// Monte Carlo protocol. `dt` and `horizon` are in the same time unit as the
/// parameters they are used with (dimensionless for [`simulate`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_particles: u64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default)]
    pub crossing: CrossingMode,
    #[serde(default = "default_cap")]
    pub max_particle_steps: u64,
}

fn default_cap() -> u64 {
    DEFAULT_STEP_CAP
}

impl SimSpec {
    pub fn new(n_particles: u64, dt: f64, horizon: f64, seed: u64) -> Self {
        Self {
            n_particles,
            dt,
            horizon,
            seed,
            crossing: CrossingMode::StepEnd,
            max_particle_steps: DEFAULT_STEP_CAP,
        }
    }

    pub fn with_crossing(mut self, crossing: CrossingMode) -> Self {
        self.crossing = crossing;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidConfig(
                "n_particles must be at least 1".into(),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.dt < self.horizon) {
            return Err(Error::InvalidConfig(format!(
                "need dt < horizon, got dt={} horizon={}",
                self.dt, self.horizon
            )));
        }
        Ok(())
    }

    /// Whole steps that fit in the horizon.
    pub fn n_steps(&self) -> u64 {
        (self.horizon / self.dt + 1e-9).floor() as u64
    }

    /// Fails with [`Error::Capacity`] when the run would exceed `max_particle_steps`.
    pub fn check_capacity(&self) -> Result<()> {
        let requested = self.n_particles as u128 * self.n_steps() as u128;
        if requested > self.max_particle_steps as u128 {
            return Err(Error::Capacity {
                requested,
                cap: self.max_particle_steps,
            });
        }
        Ok(())
    }
}

/// Borrowed view of one arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleView<'a> {
    pub time: f64,
    pub lateral: &'a [f64],
}

/// Columnar arrival buffer: all times, then the lateral block stored
/// row-major with `dim - 1` coordinates per arrival.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Arrivals {
    dim: usize,
    times: Vec<f64>,
    lateral: Vec<f64>,
}

impl Arrivals {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            times: Vec::new(),
            lateral: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            times: Vec::with_capacity(n),
            lateral: Vec::with_capacity(n * (dim - 1)),
        }
    }

    pub fn from_samples(dim: usize, samples: &[ArrivalSample]) -> Result<Self> {
        let mut out = Self::with_capacity(dim, samples.len());
        for s in samples {
            out.try_push(s.time, &s.lateral_pos)?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn get(&self, i: usize) -> SampleView<'_> {
        let m = self.dim - 1;
        SampleView {
            time: self.times[i],
            lateral: &self.lateral[i * m..(i + 1) * m],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = SampleView<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn to_samples(&self) -> Vec<ArrivalSample> {
        self.iter()
            .map(|s| ArrivalSample {
                time: s.time,
                lateral_pos: s.lateral.to_vec(),
            })
            .collect()
    }

    pub fn try_push(&mut self, time: f64, lateral: &[f64]) -> Result<()> {
        if lateral.len() != self.dim - 1 {
            return Err(Error::Domain(format!(
                "sample has {} lateral coordinates, expected {}",
                lateral.len(),
                self.dim - 1
            )));
        }
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::Domain(format!(
                "arrival time must be positive, got {time}"
            )));
        }
        self.push(time, lateral);
        Ok(())
    }

    fn push(&mut self, time: f64, lateral: &[f64]) {
        self.times.push(time);
        self.lateral.extend_from_slice(lateral);
    }

    pub fn append(&mut self, other: &mut Arrivals) {
        debug_assert_eq!(self.dim, other.dim);
        self.times.append(&mut other.times);
        self.lateral.append(&mut other.lateral);
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub arrivals: Arrivals,
    pub n_censored: u64,
    pub spec: SimSpec,
    pub params: ChannelParams,
}

impl SimResult {
    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / self.spec.n_particles as f64
    }

    pub fn absorbed_fraction(&self) -> f64 {
        self.arrivals.len() as f64 / self.spec.n_particles as f64
    }
}

/// Per-run constants of the stepping loop.
struct Kernel {
    lateral_dims: usize,
    dt: f64,
    noise: f64,
    drift_step: [f64; MAX_DIM - 1],
    origin: [f64; MAX_DIM - 1],
    n_steps: u64,
    horizon: f64,
    bridge_rate: f64,
    crossing: CrossingMode,
}

impl Kernel {
    fn new(p: &ChannelParams, spec: &SimSpec) -> Self {
        let m = p.dim() - 1;
        let mut drift_step = [0.0; MAX_DIM - 1];
        let mut origin = [0.0; MAX_DIM - 1];
        for k in 0..m {
            drift_step[k] = p.lateral_drift()[k] * spec.dt;
            origin[k] = p.lateral_origin()[k];
        }
        Self {
            lateral_dims: m,
            dt: spec.dt,
            noise: p.sigma() * spec.dt.sqrt(),
            drift_step,
            origin,
            n_steps: spec.n_steps(),
            horizon: spec.horizon,
            bridge_rate: 2.0 / (p.sigma_sq() * spec.dt),
            crossing: spec.crossing,
        }
    }

    /// Runs one particle; on absorption writes the lateral position into
    /// `out` and returns the arrival time.
    #[inline]
    fn run(&self, particle_key: u64, out: &mut [f64]) -> Option<f64> {
        let m = self.lateral_dims;
        let mut perp = 0.0f64;
        let mut lat = self.origin;
        let mut prev = [0.0; MAX_DIM - 1];
        let bridge = self.crossing == CrossingMode::BridgeCorrected;
        for step in 0..self.n_steps {
            let mut rng = CounterRng::for_step(particle_key, step);
            let a = perp;
            let z: f64 = StandardNormal.sample(&mut rng);
            perp = a + self.dt + self.noise * z;
            if bridge {
                prev[..m].copy_from_slice(&lat[..m]);
            }
            for (x, drift) in lat[..m].iter_mut().zip(&self.drift_step) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += drift + self.noise * z;
            }
            let absorbed = perp >= 1.0 || {
                bridge && {
                    let exponent = self.bridge_rate * (1.0 - a) * (1.0 - perp);
                    exponent < BRIDGE_CUTOFF && rng.open01() < (-exponent).exp()
                }
            };
            if absorbed {
                let time = if bridge {
                    for k in 0..m {
                        out[k] = 0.5 * (prev[k] + lat[k]);
                    }
                    (step as f64 + 0.5) * self.dt
                } else {
                    out[..m].copy_from_slice(&lat[..m]);
                    (step + 1) as f64 * self.dt
                };
                return Some(time.min(self.horizon));
            }
        }
        None
    }

    fn run_range(&self, seed: u64, dim: usize, range: Range<u64>) -> (Arrivals, u64) {
        let mut arrivals = Arrivals::with_capacity(dim, (range.end - range.start) as usize);
        let mut censored = 0;
        let mut lat = [0.0; MAX_DIM - 1];
        for i in range {
            match self.run(derive_key(seed, i), &mut lat) {
                Some(t) => arrivals.push(t, &lat[..self.lateral_dims]),
                None => censored += 1,
            }
        }
        (arrivals, censored)
    }

    /// Simulates particles `range` in parallel blocks, merged in index order.
    fn run_parallel(&self, seed: u64, dim: usize, range: Range<u64>) -> (Arrivals, u64) {
        let blocks: Vec<Range<u64>> = (range.start..range.end)
            .step_by(BLOCK as usize)
            .map(|s| s..(s + BLOCK).min(range.end))
            .collect();
        let parts: Vec<(Arrivals, u64)> = blocks
            .into_par_iter()
            .map(|r| self.run_range(seed, dim, r))
            .collect();
        let mut arrivals = Arrivals::with_capacity(dim, (range.end - range.start) as usize);
        let mut censored = 0;
        for (mut a, c) in parts {
            arrivals.append(&mut a);
            censored += c;
        }
        (arrivals, censored)
    }
}

/// Simulates `spec.n_particles` independent molecules and collects every
/// arrival within the horizon.
pub fn simulate(p: &ChannelParams, spec: &SimSpec) -> Result<SimResult> {
    spec.validate()?;
    spec.check_capacity()?;
    let kernel = Kernel::new(p, spec);
    let (arrivals, n_censored) = kernel.run_parallel(spec.seed, p.dim(), 0..spec.n_particles);
    Ok(SimResult {
        arrivals,
        n_censored,
        spec: spec.clone(),
        params: p.clone(),
    })
}

/// Streaming form of [`simulate`]: particles are processed in chunks of
/// `chunk_particles` and each chunk's arrivals are handed to `sink` in
/// particle order. Peak memory is one chunk. Returns the censored count.
pub fn simulate_chunked<F>(
    p: &ChannelParams,
    spec: &SimSpec,
    chunk_particles: u64,
    mut sink: F,
) -> Result<u64>
where
    F: FnMut(&Arrivals) -> Result<()>,
{
    spec.validate()?;
    spec.check_capacity()?;
    let kernel = Kernel::new(p, spec);
    let chunk = chunk_particles.max(1);
    let mut censored = 0;
    let mut start = 0;
    while start < spec.n_particles {
        let end = (start + chunk).min(spec.n_particles);
        let (arrivals, c) = kernel.run_parallel(spec.seed, p.dim(), start..end);
        censored += c;
        sink(&arrivals)?;
        start = end;
    }
    Ok(censored)
}

/// Sample means with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean_t: f64,
    pub mean_inv_t: f64,
    pub mean_lateral: Vec<f64>,
    pub stderr_t: f64,
    pub stderr_inv_t: f64,
    pub stderr_lateral: Vec<f64>,
    pub censored_fraction: f64,
}

/// Censoring above this fraction biases the moments noticeably.
pub const CENSORING_WARN_FRACTION: f64 = 1e-3;

fn mean_and_stderr(xs: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Arithmetic means of `T`, `1/T` and the lateral coordinates over arrivals.
pub fn empirical_moments(r: &SimResult) -> Result<Moments> {
    let a = &r.arrivals;
    let n = a.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let censored_fraction = r.censored_fraction();
    if censored_fraction > CENSORING_WARN_FRACTION {
        log::warn!(
            "{:.3}% of particles censored at horizon {}; moments are biased toward early arrivals",
            100.0 * censored_fraction,
            r.spec.horizon
        );
    }
    let (mean_t, stderr_t) = mean_and_stderr(a.times().iter().copied(), n);
    let (mean_inv_t, stderr_inv_t) = mean_and_stderr(a.times().iter().map(|t| 1.0 / t), n);
    let (mean_lateral, stderr_lateral) = (0..a.dim() - 1)
        .map(|k| mean_and_stderr((0..n).map(move |i| a.get(i).lateral[k]), n))
        .unzip();
    Ok(Moments {
        n,
        mean_t,
        mean_inv_t,
        mean_lateral,
        stderr_t,
        stderr_inv_t,
        stderr_lateral,
        censored_fraction,
    })
}
