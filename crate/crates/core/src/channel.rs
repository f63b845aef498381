//! Channel parameters in physical and dimensionless form.
//!
//! Lengths are measured in units of the TX-RX distance and time in units of
//! `distance / perpendicular_drift`, so the drift component normal to the
//! transmitter and receiver planes is exactly 1 and is never stored. The
//! receiver sits at `x1 = 1`; only the lateral coordinates `x2..xD` appear in
//! any type here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension. The FAP density needs K of order
/// D/2, and the Bessel routines stop at order 8.
pub const MAX_DIM: usize = 16;

/// Dimensionless channel: dimension, diffusion and the lateral geometry.
///
/// Together `sigma` and `lateral_drift` form the estimation target
/// `theta = (sigma, v2, ..., vD)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannelParams")]
pub struct ChannelParams {
    dim: usize,
    sigma: f64,
    lateral_drift: Vec<f64>,
    lateral_origin: Vec<f64>,
}

#[derive(Deserialize)]
struct RawChannelParams {
    dim: usize,
    sigma: f64,
    lateral_drift: Vec<f64>,
    lateral_origin: Vec<f64>,
}

impl TryFrom<RawChannelParams> for ChannelParams {
    type Error = Error;

    fn try_from(raw: RawChannelParams) -> Result<Self> {
        ChannelParams::new(raw.dim, raw.sigma, raw.lateral_drift, raw.lateral_origin)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "dimension must be in 1..={MAX_DIM}, got {dim}"
        )));
    }
    Ok(())
}

fn check_lateral(name: &str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim - 1 {
        return Err(Error::InvalidConfig(format!(
            "{name} has length {}, expected dim - 1 = {}",
            v.len(),
            dim - 1
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig(format!("{name} must be finite")));
    }
    Ok(())
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "{name} must be positive and finite, got {x}"
        )));
    }
    Ok(())
}

impl ChannelParams {
    pub fn new(
        dim: usize,
        sigma: f64,
        lateral_drift: Vec<f64>,
        lateral_origin: Vec<f64>,
    ) -> Result<Self> {
        check_dim(dim)?;
        check_positive("sigma", sigma)?;
        check_lateral("lateral_drift", &lateral_drift, dim)?;
        check_lateral("lateral_origin", &lateral_origin, dim)?;
        Ok(Self {
            dim,
            sigma,
            lateral_drift,
            lateral_origin,
        })
    }

    /// Zero lateral drift and release offset.
    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self> {
        check_dim(dim)?;
        Self::new(dim, sigma, vec![0.0; dim - 1], vec![0.0; dim - 1])
    }

    /// Builds parameters from `theta = (sigma, v2, ..., vD)` and the release offset.
    pub fn from_theta(theta: &[f64], lateral_origin: Vec<f64>) -> Result<Self> {
        let (&sigma, drift) = theta
            .split_first()
            .ok_or_else(|| Error::InvalidConfig("theta is empty".into()))?;
        Self::new(theta.len(), sigma, drift.to_vec(), lateral_origin)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn lateral_drift(&self) -> &[f64] {
        &self.lateral_drift
    }

    pub fn lateral_origin(&self) -> &[f64] {
        &self.lateral_origin
    }

    /// `(sigma, v2, ..., vD)`.
    pub fn theta(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.dim);
        theta.push(self.sigma);
        theta.extend_from_slice(&self.lateral_drift);
        theta
    }

    /// Euclidean norm of the full drift `(1, v2, ..., vD)`.
    pub fn drift_norm(&self) -> f64 {
        (1.0 + self.lateral_drift.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(
            self.dim,
            sigma,
            self.lateral_drift.clone(),
            self.lateral_origin.clone(),
        )
    }

    pub fn with_lateral_drift(&self, lateral_drift: Vec<f64>) -> Result<Self> {
        Self::new(
            self.dim,
            self.sigma,
            lateral_drift,
            self.lateral_origin.clone(),
        )
    }
}

/// How a quoted "diffusion coefficient" maps to the noise variance rate
/// `sigma_phys^2` of `dX = v dt + sigma dB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionConvention {
    /// The coefficient is `sigma_phys^2` itself.
    #[default]
    SigmaSquared,
    /// The coefficient is the Einstein diffusivity `D_c`, `sigma_phys^2 = 2 D_c`.
    Einstein,
}

impl DiffusionConvention {
    pub fn variance_rate(self, coefficient: f64) -> f64 {
        match self {
            Self::SigmaSquared => coefficient,
            Self::Einstein => 2.0 * coefficient,
        }
    }

    pub fn coefficient(self, variance_rate: f64) -> f64 {
        match self {
            Self::SigmaSquared => variance_rate,
            Self::Einstein => 0.5 * variance_rate,
        }
    }
}

impl std::str::FromStr for DiffusionConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma-squared" => Ok(Self::SigmaSquared),
            "einstein" => Ok(Self::Einstein),
            other => Err(Error::InvalidConfig(format!(
                "unknown diffusion convention `{other}` (expected sigma-squared or einstein)"
            ))),
        }
    }
}

/// Dimensional channel description (micrometres, seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// TX-RX distance in um.
    pub tx_rx_distance: f64,
    /// Drift component normal to the TX/RX planes, um/s.
    pub perp_drift: f64,
    /// Variance rate of the SDE noise term, um^2/s.
    pub diffusion_sigma_sq: f64,
    /// Lateral drift, um/s.
    pub lateral_drift_phys: Vec<f64>,
    /// Lateral release position, um.
    pub lateral_origin_phys: Vec<f64>,
}

impl PhysicalConfig {
    pub fn dim(&self) -> usize {
        self.lateral_drift_phys.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("tx_rx_distance", self.tx_rx_distance)?;
        check_positive("perp_drift", self.perp_drift)?;
        check_positive("diffusion_sigma_sq", self.diffusion_sigma_sq)?;
        let dim = self.dim();
        check_dim(dim)?;
        check_lateral("lateral_drift_phys", &self.lateral_drift_phys, dim)?;
        check_lateral("lateral_origin_phys", &self.lateral_origin_phys, dim)?;
        Ok(())
    }

    /// Seconds per dimensionless time unit.
    pub fn time_scale(&self) -> f64 {
        self.tx_rx_distance / self.perp_drift
    }

    /// Micrometres per dimensionless length unit.
    pub fn length_scale(&self) -> f64 {
        self.tx_rx_distance
    }
}

/// Maps a physical configuration to dimensionless parameters:
/// `sigma^2 = sigma_phys^2 / (distance * perp_drift)`, velocities divided by
/// the perpendicular drift and lengths by the distance.
pub fn normalize(cfg: &PhysicalConfig) -> Result<ChannelParams> {
    cfg.validate()?;
    let sigma = (cfg.diffusion_sigma_sq / (cfg.tx_rx_distance * cfg.perp_drift)).sqrt();
    ChannelParams::new(
        cfg.dim(),
        sigma,
        cfg.lateral_drift_phys
            .iter()
            .map(|v| v / cfg.perp_drift)
            .collect(),
        cfg.lateral_origin_phys
            .iter()
            .map(|x| x / cfg.tx_rx_distance)
            .collect(),
    )
}

/// Inverse of [`normalize`] for a chosen distance and perpendicular drift.
pub fn denormalize(
    params: &ChannelParams,
    tx_rx_distance: f64,
    perp_drift: f64,
) -> Result<PhysicalConfig> {
    let cfg = PhysicalConfig {
        tx_rx_distance,
        perp_drift,
        diffusion_sigma_sq: params.sigma_sq() * tx_rx_distance * perp_drift,
        lateral_drift_phys: params
            .lateral_drift()
            .iter()
            .map(|v| v * perp_drift)
            .collect(),
        lateral_origin_phys: params
            .lateral_origin()
            .iter()
            .map(|x| x * tx_rx_distance)
            .collect(),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// One absorbed molecule: arrival time and lateral arrival coordinates.
/// The absorbed coordinate is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSample {
    pub time: f64,
    pub lateral_pos: Vec<f64>,
}

impl ArrivalSample {
    pub fn new(time: f64, lateral_pos: Vec<f64>) -> Result<Self> {
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::Domain(format!(
                "arrival time must be positive, got {time}"
            )));
        }
        Ok(Self { time, lateral_pos })
    }
}

/// Dimensionless sample to seconds and micrometres.
pub fn denormalize_sample(s: &ArrivalSample, cfg: &PhysicalConfig) -> Result<ArrivalSample> {
    cfg.validate()?;
    Ok(ArrivalSample {
        time: s.time * cfg.time_scale(),
        lateral_pos: s
            .lateral_pos
            .iter()
            .map(|x| x * cfg.length_scale())
            .collect(),
    })
}

/// Seconds and micrometres to a dimensionless sample.
pub fn normalize_sample(s: &ArrivalSample, cfg: &PhysicalConfig) -> Result<ArrivalSample> {
    cfg.validate()?;
    Ok(ArrivalSample {
        time: s.time / cfg.time_scale(),
        lateral_pos: s
            .lateral_pos
            .iter()
            .map(|x| x / cfg.length_scale())
            .collect(),
    })
}
