//! Config files and command-line overrides. Flags win over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use driftarrival::estimate::StudySpec;
use driftarrival::{CrossingMode, DiffusionConvention, Error, PhysicalConfig, Result, SimSpec};

pub const CAP_ENV: &str = "DRIFTARRIVAL_CAP";

/// On-disk experiment description, JSON or TOML by extension.
///
/// ```toml
/// dim = 2
/// tx-rx-distance = 1.0      # um
/// perp-drift = 1.0          # um/s
/// diffusion = 0.5           # um^2/s, read per diffusion-convention
/// lateral-drift = [-3.0]    # um/s
/// particles = 1000000
/// dt = 1e-3                 # s
/// horizon = 2.0             # s
/// seed = 7
/// crossing = "bridge"
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub dim: usize,
    pub tx_rx_distance: f64,
    pub perp_drift: f64,
    pub diffusion: f64,
    #[serde(default)]
    pub diffusion_convention: Option<DiffusionConvention>,
    #[serde(default)]
    pub lateral_drift: Option<Vec<f64>>,
    #[serde(default)]
    pub lateral_origin: Option<Vec<f64>>,
    #[serde(default)]
    pub particles: Option<u64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub crossing: Option<CrossingMode>,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub per_trial: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            Some("toml") => toml::from_str(&text).map_err(|e| e.message().to_string()),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "config {} must end in .json or .toml",
                    path.display()
                )))
            }
        };
        parsed.map_err(|e| Error::InvalidConfig(format!("config {}: {e}", path.display())))
    }
}

/// Channel description shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Experiment config file (.json or .toml).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Spatial dimension D.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Noise variance rate sigma_phys^2 in um^2/s, independent of --diffusion-convention.
    #[arg(long, value_name = "F")]
    pub sigma2: Option<f64>,
    /// Lateral drift in um/s, comma separated (D-1 values).
    #[arg(
        long,
        value_name = "F,...",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub vlat: Option<Vec<f64>>,
    /// Lateral release position in um, comma separated (D-1 values).
    #[arg(
        long,
        value_name = "F,...",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub x0: Option<Vec<f64>>,
    /// TX-RX distance in um [default: 1].
    #[arg(long, value_name = "F")]
    pub lambda: Option<f64>,
    /// Perpendicular drift in um/s [default: 1].
    #[arg(long, value_name = "F")]
    pub vperp: Option<f64>,
    /// Meaning of the config file's `diffusion` value.
    #[arg(long, value_name = "CONVENTION")]
    pub diffusion_convention: Option<DiffusionConvention>,
}

impl ModelArgs {
    fn has_model_flags(&self) -> bool {
        self.config.is_some()
            || self.dim.is_some()
            || self.sigma2.is_some()
            || self.vlat.is_some()
            || self.x0.is_some()
            || self.lambda.is_some()
            || self.vperp.is_some()
    }

    pub fn file(&self) -> Result<Option<FileConfig>> {
        self.config.as_deref().map(FileConfig::load).transpose()
    }

    /// `None` when neither a config nor any model flag was given.
    pub fn resolve_optional(&self) -> Result<Option<Model>> {
        if self.has_model_flags() {
            Ok(Some(self.resolve()?))
        } else {
            Ok(None)
        }
    }

    pub fn resolve(&self) -> Result<Model> {
        let file = self.file()?;
        let f = file.as_ref();
        let convention = self
            .diffusion_convention
            .or(f.and_then(|f| f.diffusion_convention))
            .unwrap_or_default();
        let dim = self
            .dim
            .or(f.map(|f| f.dim))
            .or(self.vlat.as_ref().map(|v| v.len() + 1))
            .ok_or_else(|| missing("dim", "--dim"))?;
        let sigma_sq = match (self.sigma2, f) {
            (Some(s), _) => s,
            (None, Some(f)) => convention.variance_rate(f.diffusion),
            (None, None) => return Err(missing("diffusion", "--sigma2")),
        };
        let lateral = |flag: &Option<Vec<f64>>,
                       from_file: Option<&Vec<f64>>,
                       name: &str|
         -> Result<Vec<f64>> {
            let v = flag
                .clone()
                .or_else(|| from_file.cloned())
                .unwrap_or_else(|| vec![0.0; dim.saturating_sub(1)]);
            if v.len() + 1 != dim {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {} entries but dim {dim} needs {}",
                    v.len(),
                    dim.saturating_sub(1)
                )));
            }
            Ok(v)
        };
        let physical = PhysicalConfig {
            tx_rx_distance: self.lambda.or(f.map(|f| f.tx_rx_distance)).unwrap_or(1.0),
            perp_drift: self.vperp.or(f.map(|f| f.perp_drift)).unwrap_or(1.0),
            diffusion_sigma_sq: sigma_sq,
            lateral_drift_phys: lateral(
                &self.vlat,
                f.and_then(|f| f.lateral_drift.as_ref()),
                "lateral-drift",
            )?,
            lateral_origin_phys: lateral(
                &self.x0,
                f.and_then(|f| f.lateral_origin.as_ref()),
                "lateral-origin",
            )?,
        };
        physical.validate()?;
        Ok(Model {
            physical,
            diffusion_convention: convention,
        })
    }
}

fn missing(field: &str, flag: &str) -> Error {
    Error::InvalidConfig(format!(
        "missing field `{field}` (set it in --config or pass {flag})"
    ))
}

/// Fully resolved channel in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub physical: PhysicalConfig,
    pub diffusion_convention: DiffusionConvention,
}

impl Model {
    pub fn params(&self) -> Result<driftarrival::ChannelParams> {
        driftarrival::normalize(&self.physical)
    }

    /// Seconds to dimensionless time.
    pub fn to_time_units(&self, seconds: f64) -> f64 {
        seconds / self.physical.time_scale()
    }
}

/// Monte Carlo protocol flags; times in seconds.
#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    /// Number of released particles [default: 1000000].
    #[arg(long)]
    pub particles: Option<u64>,
    /// Step size in seconds [default: 0.001].
    #[arg(long, value_name = "SECONDS")]
    pub dt: Option<f64>,
    /// Simulation horizon in seconds [default: 2].
    #[arg(long, value_name = "SECONDS")]
    pub horizon: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Boundary-crossing test [default: step-end].
    #[arg(long, value_name = "MODE")]
    pub crossing: Option<CrossingMode>,
}

fn step_cap() -> Result<u64> {
    match std::env::var(CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|c| *c >= 1.0)
            .map(|c| c.min(u64::MAX as f64) as u64)
            .ok_or_else(|| {
                Error::InvalidConfig(format!("{CAP_ENV}={v} is not a positive step count"))
            }),
        Err(_) => Ok(driftarrival::simulate::DEFAULT_STEP_CAP),
    }
}

impl SimArgs {
    /// Dimensionless protocol for `model`.
    pub fn resolve(&self, model: &Model, file: Option<&FileConfig>) -> Result<SimSpec> {
        let n = self
            .particles
            .or(file.and_then(|f| f.particles))
            .unwrap_or(1_000_000);
        let dt = self.dt.or(file.and_then(|f| f.dt)).unwrap_or(1e-3);
        let horizon = self.horizon.or(file.and_then(|f| f.horizon)).unwrap_or(2.0);
        let seed = self.seed.or(file.and_then(|f| f.seed)).unwrap_or(0);
        let crossing = self
            .crossing
            .or(file.and_then(|f| f.crossing))
            .unwrap_or_default();
        let mut spec = SimSpec::new(
            n,
            model.to_time_units(dt),
            model.to_time_units(horizon),
            seed,
        )
        .with_crossing(crossing);
        spec.max_particle_steps = step_cap()?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Efficiency-study flags; times in seconds.
#[derive(Debug, Clone, Default, Args)]
pub struct StudyArgs {
    /// Independent trials [default: 200].
    #[arg(long)]
    pub trials: Option<u64>,
    /// Samples per trial [default: 10000].
    #[arg(long)]
    pub per_trial: Option<u64>,
    /// Step size in seconds [default: 0.001].
    #[arg(long, value_name = "SECONDS")]
    pub dt: Option<f64>,
    /// Per-trial horizon in seconds [default: 50].
    #[arg(long, value_name = "SECONDS")]
    pub horizon: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Boundary-crossing test [default: bridge].
    #[arg(long, value_name = "MODE")]
    pub crossing: Option<CrossingMode>,
}

impl StudyArgs {
    pub fn resolve(&self, model: &Model, file: Option<&FileConfig>) -> Result<StudySpec> {
        let mut spec = StudySpec::new(
            self.per_trial
                .or(file.and_then(|f| f.per_trial))
                .unwrap_or(10_000),
            self.trials.or(file.and_then(|f| f.trials)).unwrap_or(200),
            self.seed.or(file.and_then(|f| f.seed)).unwrap_or(0),
        );
        spec.dt = model.to_time_units(self.dt.or(file.and_then(|f| f.dt)).unwrap_or(1e-3));
        spec.horizon = model.to_time_units(self.horizon.unwrap_or(50.0));
        if let Some(c) = self.crossing.or(file.and_then(|f| f.crossing)) {
            spec.crossing = c;
        }
        let per_trial = SimSpec::new(spec.n_per_trial, spec.dt, spec.horizon, 0);
        per_trial.validate()?;
        let mut total = per_trial.clone();
        total.n_particles = spec.n_per_trial.saturating_mul(spec.n_trials);
        total.max_particle_steps = step_cap()?;
        total.check_capacity()?;
        Ok(spec)
    }
}
