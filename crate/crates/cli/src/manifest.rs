use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use driftarrival::{ChannelParams, PhysicalConfig, Result, SimSpec};

use crate::jobs::{Job, Produced};

/// Record of one run. `job` is everything needed to rerun it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
    pub params: Option<ChannelParams>,
    pub physical: Option<PhysicalConfig>,
    pub sim: Option<SimSpec>,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(job: Job, produced: &Produced, wall_clock_seconds: f64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            job,
            params: produced.params.clone(),
            physical: produced.physical.clone(),
            sim: produced.sim.clone(),
            seed: produced.seed,
            outputs: produced.outputs.clone(),
            threads: rayon::current_num_threads(),
            wall_clock_seconds,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}
