//! Text formats: dense stream files with `NaN` for missing coordinates,
//! JSON-lines truth sidecars and per-step record CSVs.
//!
//! A stream file starts with a `D=<dim>` line followed by one row of `D`
//! comma-separated values per sample.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::datagen::Truth;
use crate::error::{MousseError, Result};
use crate::subset::Observation;

pub const RECORD_HEADER: &str = "t,e,eps,k,glr,alarm,skipped";

pub fn write_stream_header<W: Write>(w: &mut W, dim: usize) -> Result<()> {
    writeln!(w, "D={dim}")?;
    Ok(())
}

/// Writes an observation as a dense row.
pub fn write_stream_row<W: Write>(w: &mut W, obs: &Observation, dim: usize) -> Result<()> {
    let dense = obs.scatter_nan(dim);
    let mut line = String::with_capacity(dim * 12);
    for (i, x) in dense.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        if x.is_nan() {
            line.push_str("NaN");
        } else {
            line.push_str(&x.to_string());
        }
    }
    writeln!(w, "{line}")?;
    Ok(())
}

/// Reads rows of a stream file one at a time.
pub struct StreamReader<R> {
    inner: R,
    dim: usize,
    line: usize,
    buf: String,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut buf = String::new();
        let mut line = 0;
        loop {
            buf.clear();
            line += 1;
            if inner.read_line(&mut buf)? == 0 {
                return Err(MousseError::Parse {
                    line,
                    message: "missing D=<dim> header".into(),
                });
            }
            if !buf.trim().is_empty() {
                break;
            }
        }
        let dim = buf
            .trim()
            .strip_prefix("D=")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| MousseError::Parse {
                line,
                message: format!("expected D=<dim> header, got '{}'", buf.trim()),
            })?;
        Ok(StreamReader {
            inner,
            dim,
            line,
            buf,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Line number of the row returned last.
    pub fn line(&self) -> usize {
        self.line
    }

    /// Next row as dense values with `NaN` for missing entries.
    pub fn next_row(&mut self) -> Result<Option<Vec<f64>>> {
        loop {
            self.buf.clear();
            self.line += 1;
            if self.inner.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let line = self.line;
            let row = text
                .split(',')
                .map(|f| {
                    let f = f.trim();
                    f.parse::<f64>()
                        .ok()
                        .filter(|x| !x.is_infinite())
                        .ok_or_else(|| MousseError::Parse {
                            line,
                            message: format!("bad value '{f}'"),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != self.dim {
                return Err(MousseError::Parse {
                    line,
                    message: format!("expected {} fields, got {}", self.dim, row.len()),
                });
            }
            return Ok(Some(row));
        }
    }

    /// Next row as an observation at time `t`.
    pub fn next_observation(&mut self, t: u64) -> Result<Option<Observation>> {
        let Some(row) = self.next_row()? else {
            return Ok(None);
        };
        Observation::from_dense(t, &row)
            .map(Some)
            .map_err(|err| MousseError::Parse {
                line: self.line,
                message: err.to_string(),
            })
    }
}

pub fn write_truth<W: Write>(w: &mut W, truth: &Truth) -> Result<()> {
    let line = serde_json::to_string(truth).map_err(|e| MousseError::Io(e.to_string()))?;
    writeln!(w, "{line}")?;
    Ok(())
}

pub fn read_truth<R: BufRead>(r: R) -> Result<Vec<Truth>> {
    r.lines()
        .enumerate()
        .filter(|(_, l)| !l.as_ref().is_ok_and(|l| l.trim().is_empty()))
        .map(|(i, l)| {
            serde_json::from_str(&l?).map_err(|e| MousseError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// One row of the per-step output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub t: u64,
    pub e: f64,
    pub eps: f64,
    pub k: usize,
    /// Zero until the detector is calibrated.
    pub glr: f64,
    pub alarm: bool,
    pub skipped: bool,
}

impl StreamRecord {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.t, self.e, self.eps, self.k, self.glr, self.alarm as u8, self.skipped as u8
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let bad = || MousseError::InvalidObservation(format!("bad record '{line}'"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(bad());
        }
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad()),
        };
        Ok(StreamRecord {
            t: f[0].parse().map_err(|_| bad())?,
            e: f[1].parse().map_err(|_| bad())?,
            eps: f[2].parse().map_err(|_| bad())?,
            k: f[3].parse().map_err(|_| bad())?,
            glr: f[4].parse().map_err(|_| bad())?,
            alarm: flag(f[5])?,
            skipped: flag(f[6])?,
        })
    }
}

/// Writes records under [`RECORD_HEADER`].
pub struct RecordWriter<W: Write> {
    inner: W,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        writeln!(inner, "{RECORD_HEADER}")?;
        Ok(RecordWriter { inner })
    }

    pub fn write(&mut self, rec: &StreamRecord) -> Result<()> {
        writeln!(self.inner, "{}", rec.to_csv())?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<StreamRecord>> {
    let mut lines = r.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == RECORD_HEADER => {}
        _ => {
            return Err(MousseError::Parse {
                line: 1,
                message: format!("expected header '{RECORD_HEADER}'"),
            })
        }
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            StreamRecord::from_csv(&l?).map_err(|e| MousseError::Parse {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}
