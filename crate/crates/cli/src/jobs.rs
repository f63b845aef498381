//! Resolved invocations. Each command is first resolved into a [`Job`] so
//! that the manifest can replay it exactly.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use driftarrival::analytic::{fap_pdf, fat_cdf, fat_pdf, fim_closed_form, joint_pdf, lateral_pdf};
use driftarrival::estimate::{crlb_report, efficiency_study, mle, parameter_names, StudySpec};
use driftarrival::samples::{fmt_f64, read_samples, SampleHeader, SampleWriter, Units};
use driftarrival::simulate::simulate_chunked;
use driftarrival::validate::{
    bin_probabilities, build_histogram, default_grid, gof_against, BinModel, Histogram2D,
};
use driftarrival::{Arrivals, ChannelParams, Error, Result, SimSpec};

use crate::config::Model;

const CHUNK_PARTICLES: u64 = 1 << 16;
const PDF_POINTS: usize = 201;

/// Evaluation or binning grid in dimensionless units. `axis` selects the
/// lateral coordinate `x_{axis+2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t_edges: Vec<f64>,
    pub x_edges: Vec<f64>,
    #[serde(default)]
    pub axis: usize,
}

impl Grid {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Simulate {
        model: Model,
        sim: SimSpec,
    },
    Pdf {
        model: Model,
        horizon: f64,
        grid: Grid,
    },
    Estimate {
        input: PathBuf,
    },
    Fim {
        model: Model,
        n: u64,
    },
    Validate {
        input: PathBuf,
        model: Option<Model>,
        grid: Option<Grid>,
        axis: usize,
    },
    Study {
        model: Model,
        study: StudySpec,
    },
}

/// What a job produced, for the manifest.
#[derive(Debug, Default)]
pub struct Produced {
    pub outputs: Vec<String>,
    pub params: Option<ChannelParams>,
    pub physical: Option<driftarrival::PhysicalConfig>,
    pub sim: Option<SimSpec>,
    pub seed: Option<u64>,
    /// Printed to stdout.
    pub summary: Option<serde_json::Value>,
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Simulate { .. } => "simulate",
            Job::Pdf { .. } => "pdf",
            Job::Estimate { .. } => "estimate",
            Job::Fim { .. } => "fim",
            Job::Validate { .. } => "validate",
            Job::Study { .. } => "study",
        }
    }

    pub fn run(&self, out: &Path) -> Result<Produced> {
        fs::create_dir_all(out)?;
        match self {
            Job::Simulate { model, sim } => run_simulate(model, sim, out),
            Job::Pdf {
                model,
                horizon,
                grid,
            } => run_pdf(model, *horizon, grid, out),
            Job::Estimate { input } => run_estimate(input, out),
            Job::Fim { model, n } => run_fim(model, *n, out),
            Job::Validate {
                input,
                model,
                grid,
                axis,
            } => run_validate(input, model.as_ref(), grid.as_ref(), *axis, out),
            Job::Study { model, study } => run_study(model, study, out),
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn csv_row(w: &mut impl Write, values: &[f64]) -> Result<()> {
    let line: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    writeln!(w, "{}", line.join(","))?;
    Ok(())
}

fn run_simulate(model: &Model, sim: &SimSpec, out: &Path) -> Result<Produced> {
    let params = model.params()?;
    sim.validate()?;
    sim.check_capacity()?;
    let phys = &model.physical;
    let header = SampleHeader {
        dim: params.dim(),
        units: Units::Physical,
        seed: sim.seed,
        params: params.clone(),
        physical: Some(phys.clone()),
        sim: sim.clone(),
    };
    log::info!(
        "simulate: {} particles, {} steps of {} s, {} crossing",
        sim.n_particles,
        sim.n_steps(),
        sim.dt * phys.time_scale(),
        sim.crossing
    );
    let path = out.join("samples.csv");
    let mut writer = SampleWriter::new(BufWriter::new(File::create(&path)?), &header)?;
    let (ts, ls) = (phys.time_scale(), phys.length_scale());
    let mut lateral = vec![0.0; params.dim() - 1];
    let censored = simulate_chunked(&params, sim, CHUNK_PARTICLES, |chunk| {
        for s in chunk.iter() {
            for (dst, x) in lateral.iter_mut().zip(s.lateral) {
                *dst = x * ls;
            }
            writer.write_sample(s.time * ts, &lateral)?;
        }
        Ok(())
    })?;
    writer.finish(censored)?;
    let absorbed = 1.0 - censored as f64 / sim.n_particles as f64;
    log::info!(
        "simulate: absorbed fraction {absorbed:.6} (model {:.6}), wrote {}",
        fat_cdf(sim.horizon, &params)?,
        path.display()
    );
    Ok(Produced {
        outputs: vec!["samples.csv".into()],
        params: Some(params),
        physical: Some(phys.clone()),
        sim: Some(sim.clone()),
        seed: Some(sim.seed),
        summary: None,
    })
}

/// Reads a sample file and returns its header, censored count and the
/// arrivals in dimensionless units.
pub fn load_dimensionless(path: &Path) -> Result<(SampleHeader, u64, Arrivals)> {
    let (header, raw, trailer) = read_samples(BufReader::new(File::open(path)?))?;
    let arrivals = match header.units {
        Units::Dimensionless => raw,
        Units::Physical => {
            let phys = header
                .physical
                .as_ref()
                .ok_or_else(|| Error::Format("physical units without a physical config".into()))?;
            let (ts, ls) = (phys.time_scale(), phys.length_scale());
            let mut a = Arrivals::with_capacity(header.dim, raw.len());
            let mut x = vec![0.0; header.dim - 1];
            for s in raw.iter() {
                for (dst, v) in x.iter_mut().zip(s.lateral) {
                    *dst = v / ls;
                }
                a.try_push(s.time / ts, &x)?;
            }
            a
        }
    };
    log::info!(
        "read {} arrivals ({} censored) from {}",
        arrivals.len(),
        trailer.n_censored,
        path.display()
    );
    Ok((header, trailer.n_censored, arrivals))
}

fn run_estimate(input: &Path, out: &Path) -> Result<Produced> {
    let (header, censored, arrivals) = load_dimensionless(input)?;
    let total = arrivals.len() as u64 + censored;
    let censored_fraction = if total == 0 {
        0.0
    } else {
        censored as f64 / total as f64
    };
    let mut est = mle(&arrivals, header.params.lateral_origin()).inspect_err(|e| {
        if let Error::DegenerateSample {
            lateral_drift_hat, ..
        } = e
        {
            log::error!("lateral drift estimate {lateral_drift_hat:?} (sigma not identifiable)");
        }
    })?;
    if let Some(w) = driftarrival::estimate::censoring_warning(censored_fraction) {
        log::warn!("{w}");
        est.warnings.push(w);
    }
    let physical = header.physical.as_ref().map(|phys| {
        let sigma_sq_phys = est.theta_hat[0].powi(2) * phys.tx_rx_distance * phys.perp_drift;
        json!({
            "diffusion_sigma_sq": sigma_sq_phys,
            "einstein_diffusivity": 0.5 * sigma_sq_phys,
            "lateral_drift": est.theta_hat[1..].iter().map(|v| v * phys.perp_drift).collect::<Vec<_>>(),
        })
    });
    let report = json!({
        "input": input,
        "parameters": parameter_names(header.dim),
        "estimate": est,
        "sigma_sq_hat": est.theta_hat[0].powi(2),
        "n_censored": censored,
        "censored_fraction": censored_fraction,
        "generating_params": header.params,
        "physical": physical,
    });
    write_json(&out.join("estimate.json"), &report)?;
    log::info!(
        "estimate: theta_hat {:?} from {} samples",
        est.theta_hat,
        est.n_samples
    );
    Ok(Produced {
        outputs: vec!["estimate.json".into()],
        params: Some(header.params),
        physical: header.physical,
        sim: Some(header.sim),
        seed: Some(header.seed),
        summary: Some(report),
    })
}

fn run_fim(model: &Model, n: u64, out: &Path) -> Result<Produced> {
    let params = model.params()?;
    let fim = fim_closed_form(&params);
    let crlb = crlb_report(&params, n)?;
    let report = json!({
        "parameters": parameter_names(params.dim()),
        "n": n,
        "fim_per_sample": fim.rows(),
        "crlb": crlb,
        "params": params,
    });
    write_json(&out.join("fim.json"), &report)?;
    log::info!("fim: crlb {crlb:?} for n = {n}");
    Ok(Produced {
        outputs: vec!["fim.json".into()],
        params: Some(params),
        physical: Some(model.physical.clone()),
        summary: Some(report),
        ..Produced::default()
    })
}

/// The `(T, X_k)` marginal of a `D`-dimensional channel is the planar
/// channel with lateral drift `v_k`.
fn planar_marginal(p: &ChannelParams, axis: usize) -> Result<ChannelParams> {
    if axis + 1 >= p.dim() {
        return Err(Error::InvalidConfig(format!(
            "lateral axis x{} does not exist for dim {}",
            axis + 2,
            p.dim()
        )));
    }
    ChannelParams::new(
        2,
        p.sigma(),
        vec![p.lateral_drift()[axis]],
        vec![p.lateral_origin()[axis]],
    )
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Default evaluation grid: `PDF_POINTS` points on `[0, horizon]` and on a
/// lateral window that follows the drifting mean out to five spreads.
pub fn default_pdf_grid(p: &ChannelParams, horizon: f64, axis: usize) -> Result<Grid> {
    let t_edges = linspace(0.0, horizon, PDF_POINTS);
    if p.dim() == 1 {
        return Ok(Grid {
            t_edges,
            x_edges: Vec::new(),
            axis: 0,
        });
    }
    let q = planar_marginal(p, axis)?;
    let (x0, v) = (q.lateral_origin()[0], q.lateral_drift()[0]);
    let spread = 5.0 * q.sigma() * horizon.sqrt();
    let lo = x0 + (v * horizon).min(0.0) - spread;
    let hi = x0 + (v * horizon).max(0.0) + spread;
    Ok(Grid {
        t_edges,
        x_edges: linspace(lo, hi, PDF_POINTS),
        axis,
    })
}

fn run_pdf(model: &Model, horizon: f64, grid: &Grid, out: &Path) -> Result<Produced> {
    let params = model.params()?;
    let norm = fat_cdf(horizon, &params)?;
    let path = out.join("pdf.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    // Densities are continuous at t = 0 with value 0.
    let at = |t: f64, f: &dyn Fn(f64) -> Result<f64>| if t == 0.0 { Ok(0.0) } else { f(t) };
    if params.dim() == 1 {
        writeln!(w, "t,fat,conditional")?;
        for &t in &grid.t_edges {
            let fat = at(t, &|t| fat_pdf(t, &params))?;
            csv_row(&mut w, &[t, fat, fat / norm])?;
        }
    } else {
        let q = planar_marginal(&params, grid.axis)?;
        let col = format!("x{}", grid.axis + 2);
        writeln!(w, "t,{col},fat,lateral,joint,conditional,fap")?;
        for &t in &grid.t_edges {
            if t > horizon {
                return Err(Error::Domain(format!(
                    "grid time {t} exceeds the horizon {horizon}"
                )));
            }
            let fat = at(t, &|t| fat_pdf(t, &q))?;
            for &x in &grid.x_edges {
                let lateral = at(t, &|t| lateral_pdf(&[x], t, &q))?;
                let joint = at(t, &|t| joint_pdf(t, &[x], &q))?;
                let fap = fap_pdf(&[x], &q)?;
                csv_row(&mut w, &[t, x, fat, lateral, joint, joint / norm, fap])?;
            }
        }
    }
    w.flush()?;
    write_json(&out.join("grid.json"), grid)?;
    log::info!(
        "pdf: {} x {} grid written to {}",
        grid.t_edges.len(),
        grid.x_edges.len(),
        path.display()
    );
    Ok(Produced {
        outputs: vec!["pdf.csv".into(), "grid.json".into()],
        params: Some(params),
        physical: Some(model.physical.clone()),
        ..Produced::default()
    })
}

fn write_histogram(path: &Path, h: &Histogram2D) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_lo,t_hi,x_lo,x_hi,count")?;
    for i in 0..h.n_t() {
        for j in 0..h.n_x() {
            let edges = [
                h.t_edges[i],
                h.t_edges[i + 1],
                h.x_edges[j],
                h.x_edges[j + 1],
            ];
            let cells: Vec<String> = edges.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(w, "{},{}", cells.join(","), h.count(i, j))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_model(path: &Path, m: &BinModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_lo,t_hi,x_lo,x_hi,prob")?;
    let n_x = m.x_edges.len() - 1;
    for i in 0..m.t_edges.len() - 1 {
        for j in 0..n_x {
            csv_row(
                &mut w,
                &[
                    m.t_edges[i],
                    m.t_edges[i + 1],
                    m.x_edges[j],
                    m.x_edges[j + 1],
                    m.probs[i * n_x + j],
                ],
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_validate(
    input: &Path,
    model: Option<&Model>,
    grid: Option<&Grid>,
    axis: usize,
    out: &Path,
) -> Result<Produced> {
    let (header, _, arrivals) = load_dimensionless(input)?;
    let params = match model {
        Some(m) => m.params()?,
        None => header.params.clone(),
    };
    if params.dim() != header.dim {
        return Err(Error::InvalidConfig(format!(
            "model dimension {} does not match the samples' {}",
            params.dim(),
            header.dim
        )));
    }
    if params.dim() < 2 {
        return Err(Error::InvalidConfig(
            "validate needs lateral coordinates (dim >= 2)".into(),
        ));
    }
    let horizon = header.sim.horizon;
    let (t_edges, x_edges, axis) = match grid {
        Some(g) => (g.t_edges.clone(), g.x_edges.clone(), g.axis),
        None => {
            let (t, x) = default_grid(&params, horizon, axis)?;
            (t, x, axis)
        }
    };
    let hist = build_histogram(&arrivals, &t_edges, &x_edges, axis)?;
    let bins = bin_probabilities(&t_edges, &x_edges, axis, &params, horizon)?;
    write_histogram(&out.join("histogram.csv"), &hist)?;
    write_model(&out.join("model.csv"), &bins)?;
    let gof = gof_against(&hist, &bins)?;
    let report = json!({
        "input": input,
        "axis": format!("x{}", axis + 2),
        "horizon": horizon,
        "model_params": params,
        "model_overflow_prob": bins.overflow,
        "gof": gof,
    });
    write_json(&out.join("gof.json"), &report)?;
    log::info!(
        "validate: chi2 {:.3} on {} dof, p = {:.4}, total variation {:.5}",
        gof.chi2_stat,
        gof.dof,
        gof.p_value,
        gof.total_variation
    );
    Ok(Produced {
        outputs: vec![
            "histogram.csv".into(),
            "model.csv".into(),
            "gof.json".into(),
        ],
        params: Some(params),
        physical: model.map(|m| m.physical.clone()).or(header.physical),
        sim: Some(header.sim),
        seed: Some(header.seed),
        summary: Some(report),
    })
}

fn run_study(model: &Model, study: &StudySpec, out: &Path) -> Result<Produced> {
    let params = model.params()?;
    log::info!(
        "study: {} trials of {} samples, dt {}, {} crossing",
        study.n_trials,
        study.n_per_trial,
        study.dt,
        study.crossing
    );
    let report = efficiency_study(&params, study)?;
    let mut w = BufWriter::new(File::create(out.join("study.csv"))?);
    writeln!(w, "param,emp_var,crlb,ratio")?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},{}",
            row.param,
            fmt_f64(row.emp_var),
            fmt_f64(row.crlb),
            fmt_f64(row.ratio)
        )?;
    }
    w.flush()?;
    write_json(&out.join("study.json"), &report)?;
    for row in &report.rows {
        log::info!("study: {} n*var/CRLB ratio {:.4}", row.param, row.ratio);
    }
    Ok(Produced {
        outputs: vec!["study.csv".into(), "study.json".into()],
        params: Some(params),
        physical: Some(model.physical.clone()),
        seed: Some(study.seed),
        summary: Some(serde_json::to_value(&report)?),
        ..Produced::default()
    })
}
