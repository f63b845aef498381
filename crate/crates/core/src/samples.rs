//! Text sample dump.
//!
//! ```text
//! # driftarrival-samples/1 {"dim":2,...}      header: JSON on one line
//! t,x2                                        column row: t, x2, ..., xD
//! 1.0230000000000000e0,-1.2340000000000000e-1 one row per arrival
//! # end {"n_arrivals":..,"n_censored":..}     trailer
//! ```
//!
//! Numbers use 17 significant digits so files round-trip exactly and are
//! byte-identical for identical runs.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, PhysicalConfig};
use crate::error::{Error, Result};
use crate::simulate::{Arrivals, SimSpec};

pub const MAGIC: &str = "# driftarrival-samples/1 ";
const TRAILER: &str = "# end ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    /// Normalized time and length.
    Dimensionless,
    /// Seconds and micrometres; requires `physical` in the header.
    Physical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleHeader {
    pub dim: usize,
    pub units: Units,
    pub seed: u64,
    /// Dimensionless parameters the samples were drawn from.
    pub params: ChannelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalConfig>,
    /// Protocol in dimensionless units.
    pub sim: SimSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTrailer {
    pub n_arrivals: u64,
    pub n_censored: u64,
}

/// Formats with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Streaming writer; call [`SampleWriter::finish`] to emit the trailer.
pub struct SampleWriter<W: Write> {
    out: W,
    dim: usize,
    n_arrivals: u64,
    line: String,
}

impl<W: Write> SampleWriter<W> {
    pub fn new(mut out: W, header: &SampleHeader) -> Result<Self> {
        writeln!(out, "{MAGIC}{}", serde_json::to_string(header)?)?;
        let mut cols = vec!["t".to_string()];
        cols.extend((2..=header.dim).map(|k| format!("x{k}")));
        writeln!(out, "{}", cols.join(","))?;
        Ok(Self {
            out,
            dim: header.dim,
            n_arrivals: 0,
            line: String::new(),
        })
    }

    pub fn write_sample(&mut self, t: f64, lateral: &[f64]) -> Result<()> {
        use std::fmt::Write as _;
        debug_assert_eq!(lateral.len(), self.dim - 1);
        self.line.clear();
        let _ = write!(self.line, "{t:.16e}");
        for x in lateral {
            let _ = write!(self.line, ",{x:.16e}");
        }
        self.line.push('\n');
        self.out.write_all(self.line.as_bytes())?;
        self.n_arrivals += 1;
        Ok(())
    }

    pub fn write_arrivals(&mut self, a: &Arrivals) -> Result<()> {
        for s in a.iter() {
            self.write_sample(s.time, s.lateral)?;
        }
        Ok(())
    }

    pub fn finish(mut self, n_censored: u64) -> Result<W> {
        let trailer = SampleTrailer {
            n_arrivals: self.n_arrivals,
            n_censored,
        };
        writeln!(self.out, "{TRAILER}{}", serde_json::to_string(&trailer)?)?;
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Reads a sample file, handing each row to `on_sample` as it is parsed.
pub fn read_samples_with<R, F>(input: R, mut on_sample: F) -> Result<(SampleHeader, SampleTrailer)>
where
    R: BufRead,
    F: FnMut(f64, &[f64]) -> Result<()>,
{
    let mut lines = input.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format("empty file".into()))??;
    let json = first
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format("missing driftarrival-samples/1 header".into()))?;
    let header: SampleHeader = serde_json::from_str(json)?;
    if header.params.dim() != header.dim {
        return Err(Error::Format(
            "header dimension disagrees with its parameters".into(),
        ));
    }
    let columns = lines
        .next()
        .ok_or_else(|| Error::Format("missing column row".into()))??;
    if columns.split(',').count() != header.dim {
        return Err(Error::Format(format!(
            "column row `{columns}` does not match dim {}",
            header.dim
        )));
    }

    let mut lateral = vec![0.0; header.dim - 1];
    let mut n = 0u64;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if let Some(json) = line.strip_prefix(TRAILER) {
            let trailer: SampleTrailer = serde_json::from_str(json)?;
            if trailer.n_arrivals != n {
                return Err(Error::Format(format!(
                    "trailer reports {} arrivals, file has {n}",
                    trailer.n_arrivals
                )));
            }
            return Ok((header, trailer));
        }
        let mut fields = line.split(',');
        let parse = |f: Option<&str>| -> Result<f64> {
            f.ok_or_else(|| Error::Format(format!("row {}: too few columns", lineno + 3)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("row {}: {e}", lineno + 3)))
        };
        let t = parse(fields.next())?;
        for x in lateral.iter_mut() {
            *x = parse(fields.next())?;
        }
        if fields.next().is_some() {
            return Err(Error::Format(format!(
                "row {}: too many columns",
                lineno + 3
            )));
        }
        on_sample(t, &lateral)?;
        n = lineno as u64 + 1;
    }
    Err(Error::Format("truncated file: missing trailer".into()))
}

/// Reads a whole sample file into memory, values as stored.
pub fn read_samples<R: BufRead>(input: R) -> Result<(SampleHeader, Arrivals, SampleTrailer)> {
    let mut arrivals = None::<Arrivals>;
    let mut dim = 0;
    let (header, trailer) = read_samples_with(input, |t, x| {
        if arrivals.is_none() {
            dim = x.len() + 1;
            arrivals = Some(Arrivals::new(dim));
        }
        arrivals.as_mut().unwrap().try_push(t, x)
    })?;
    Ok((
        header.clone(),
        arrivals.unwrap_or_else(|| Arrivals::new(header.dim)),
        trailer,
    ))
}
