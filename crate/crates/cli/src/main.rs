//! `driftarrival`: simulate, evaluate, estimate and validate drift-diffusion
//! first-arrival statistics.
//!
//! Exit codes: 1 configuration, 2 I/O or malformed input, 3 capacity guard,
//! 4 degenerate sample, 5 goodness-of-fit not testable.

mod config;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use driftarrival::{Error, Result};

use config::{ModelArgs, SimArgs, StudyArgs};
use jobs::{default_pdf_grid, Grid, Job};
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "driftarrival",
    version,
    about = "First-arrival statistics of drift-diffusion channels"
)]
struct Cli {
    /// Worker threads for simulation and studies [default: all cores].
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate particles and write samples.csv (seconds, um).
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Evaluate densities on a grid and write pdf.csv and grid.json (dimensionless units).
    Pdf {
        #[command(flatten)]
        model: ModelArgs,
        /// Conditioning horizon in seconds [default: config horizon, else 2].
        #[arg(long, value_name = "SECONDS")]
        horizon: Option<f64>,
        /// Grid file with t_edges/x_edges (as written by pdf).
        #[arg(long, value_name = "PATH")]
        grid: Option<PathBuf>,
        /// Lateral coordinate to tabulate (2..=D).
        #[arg(long, default_value_t = 2)]
        axis: usize,
    },
    /// Maximum likelihood estimate from a sample file.
    Estimate {
        /// Sample file written by `simulate`.
        input: PathBuf,
    },
    /// Closed-form Fisher information and Cramer-Rao bounds.
    Fim {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of observations.
        #[arg(short = 'n', long = "samples", value_name = "N")]
        n: u64,
    },
    /// Histogram goodness-of-fit of a sample file against the model.
    Validate {
        /// Sample file written by `simulate`.
        input: PathBuf,
        /// Model to test against [default: the parameters in the sample header].
        #[command(flatten)]
        model: ModelArgs,
        /// Binning grid file [default: 0.05 time bins, 20 lateral bins over +-4 sigma].
        #[arg(long, value_name = "PATH")]
        grid: Option<PathBuf>,
        /// Lateral coordinate to bin (2..=D).
        #[arg(long, default_value_t = 2)]
        axis: usize,
    },
    /// Repeated simulate-then-estimate trials compared with the CRLB.
    Study {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Rerun the job recorded in a manifest.
    Replay {
        /// manifest.json of an earlier run.
        manifest: PathBuf,
    },
}

fn axis_index(axis: usize) -> Result<usize> {
    axis.checked_sub(2).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "--axis must be a lateral coordinate (2..=D), got {axis}"
        ))
    })
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(path)?)
}

fn resolve(command: Command) -> Result<Job> {
    Ok(match command {
        Command::Simulate { model, sim } => {
            let file = model.file()?;
            let m = model.resolve()?;
            let sim = sim.resolve(&m, file.as_ref())?;
            Job::Simulate { model: m, sim }
        }
        Command::Pdf {
            model,
            horizon,
            grid,
            axis,
        } => {
            let file = model.file()?;
            let m = model.resolve()?;
            let seconds = horizon
                .or(file.as_ref().and_then(|f| f.horizon))
                .unwrap_or(2.0);
            let horizon = m.to_time_units(seconds);
            let grid = match grid {
                Some(path) => Grid::load(&path)?,
                None => default_pdf_grid(&m.params()?, horizon, axis_index(axis)?)?,
            };
            Job::Pdf {
                model: m,
                horizon,
                grid,
            }
        }
        Command::Estimate { input } => Job::Estimate {
            input: absolute(&input)?,
        },
        Command::Fim { model, n } => {
            if n == 0 {
                return Err(Error::InvalidConfig("--samples must be positive".into()));
            }
            Job::Fim {
                model: model.resolve()?,
                n,
            }
        }
        Command::Validate {
            input,
            model,
            grid,
            axis,
        } => Job::Validate {
            input: absolute(&input)?,
            model: model.resolve_optional()?,
            grid: grid.as_deref().map(Grid::load).transpose()?,
            axis: axis_index(axis)?,
        },
        Command::Study { model, study } => {
            let file = model.file()?;
            let m = model.resolve()?;
            let study = study.resolve(&m, file.as_ref())?;
            Job::Study { model: m, study }
        }
        Command::Replay { manifest } => {
            let m = RunManifest::load(&manifest)?;
            log::info!("replaying {} from {}", m.job.name(), manifest.display());
            m.job
        }
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("--threads: {e}")))?;
    }
    let job = resolve(cli.command)?;
    let start = Instant::now();
    let produced = job.run(&cli.out)?;
    let manifest = RunManifest::new(job, &produced, start.elapsed().as_secs_f64());
    manifest.save(&cli.out.join("manifest.json"))?;
    if let Some(summary) = &produced.summary {
        println!("{}", serde_json::to_string_pretty(summary)?);
    }
    log::info!(
        "{} done in {:.2} s",
        manifest.job.name(),
        manifest.wall_clock_seconds
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::Domain(_) => 1,
        Error::Io(_) | Error::Format(_) | Error::Json(_) => 2,
        Error::Capacity { .. } => 3,
        Error::EmptySample | Error::DegenerateSample { .. } => 4,
        Error::CannotTest(_) => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if let Error::Capacity { .. } = e {
                log::error!("{e} (raise it with {}=N)", config::CAP_ENV);
            } else {
                log::error!("{e}");
            }
            ExitCode::from(code)
        }
    }
}
