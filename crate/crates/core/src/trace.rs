//! JSON-lines trace files.
//!
//! One JSON object per line, tagged by `"record"`:
//!
//! - `header`: format tag, dimension and the full resolved [`EngineConfig`]
//!   (prior included);
//! - `step`: one [`StepRecord`] per observation, in stream order;
//! - `checkpoint`: one [`Checkpoint`] per scheduled point;
//! - `summary`: final counts, concentration state and every live cluster.
//!
//! Exactly one header comes first and exactly one summary comes last. Floats
//! are written in shortest round-trip form, so reading a trace back gives
//! bit-identical values. Absent optional values are `null`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::Checkpoint;
use crate::engine::{ClusterBook, ConcentrationState, EngineConfig, RunTrace, StepRecord};
use crate::error::{Error, Result};
use crate::niw::NiwPosterior;

pub const FORMAT: &str = "asugs-trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: u64,
    pub mu: Vec<f64>,
    /// Row-major.
    pub sigma: Vec<Vec<f64>>,
    pub c: f64,
    pub delta: f64,
    pub m: u64,
    pub w: f64,
}

impl ClusterSummary {
    pub fn posterior(&self) -> Result<NiwPosterior> {
        let d = self.mu.len();
        if self.sigma.len() != d || self.sigma.iter().any(|r| r.len() != d) {
            return Err(Error::Trace(format!(
                "cluster {}: sigma is not {d} x {d}",
                self.id
            )));
        }
        NiwPosterior::new(
            DVector::from_column_slice(&self.mu),
            self.c,
            self.delta,
            DMatrix::from_fn(d, d, |i, j| self.sigma[i][j]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: u64,
    pub dropped: u64,
    pub concentration: ConcentrationState,
    pub clusters: Vec<ClusterSummary>,
}

impl Summary {
    pub fn from_book(book: &ClusterBook, conc: &ConcentrationState) -> Self {
        Summary {
            n: book.n(),
            dropped: book.dropped(),
            concentration: *conc,
            clusters: book
                .clusters()
                .iter()
                .map(|c| ClusterSummary {
                    id: c.id,
                    mu: c.post.mu().iter().copied().collect(),
                    sigma: c
                        .post
                        .sigma()
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                    c: c.post.c(),
                    delta: c.post.delta(),
                    m: c.m,
                    w: c.w,
                })
                .collect(),
        }
    }

    /// Rebuild a book for evaluation. Pair distances are not stored, so the
    /// result is fit for densities and held-out scores, not for resuming.
    pub fn book(&self) -> Result<ClusterBook> {
        let parts = self
            .clusters
            .iter()
            .map(|c| Ok((c.posterior()?, c.m, c.w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClusterBook::from_clusters(parts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        format: String,
        dim: usize,
        config: EngineConfig,
    },
    Step(StepRecord),
    Checkpoint(Checkpoint),
    Summary(Summary),
}

/// The persisted form of a [`RunTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub config: EngineConfig,
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub summary: Summary,
}

impl From<&RunTrace> for TraceFile {
    fn from(t: &RunTrace) -> Self {
        TraceFile {
            config: t.config.clone(),
            steps: t.steps.clone(),
            checkpoints: t.checkpoints.clone(),
            summary: Summary::from_book(&t.book, &t.conc),
        }
    }
}

impl TraceFile {
    pub fn class_counts(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.k as f64).collect()
    }
}

pub fn write_trace_to(mut out: impl Write, trace: &TraceFile) -> Result<()> {
    let mut line = |rec: &Record| -> Result<()> {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
        Ok(())
    };
    line(&Record::Header {
        format: FORMAT.into(),
        dim: trace.config.dim(),
        config: trace.config.clone(),
    })?;
    for s in &trace.steps {
        line(&Record::Step(s.clone()))?;
    }
    for c in &trace.checkpoints {
        line(&Record::Checkpoint(c.clone()))?;
    }
    line(&Record::Summary(trace.summary.clone()))?;
    out.flush()?;
    Ok(())
}

pub fn write_trace(path: impl AsRef<Path>, trace: &TraceFile) -> Result<()> {
    write_trace_to(BufWriter::new(File::create(path)?), trace)
}

pub fn read_trace_from(reader: impl Read) -> Result<TraceFile> {
    let mut config = None;
    let mut steps = Vec::new();
    let mut checkpoints = Vec::new();
    let mut summary = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(Error::Trace(format!(
                "line {}: record after summary",
                i + 1
            )));
        }
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::Trace(format!("line {}: {e}", i + 1)))?;
        match rec {
            Record::Header {
                format, config: c, ..
            } => {
                if format != FORMAT {
                    return Err(Error::Trace(format!("unknown format {format:?}")));
                }
                if config.is_some() {
                    return Err(Error::Trace(format!("line {}: second header", i + 1)));
                }
                config = Some(c);
            }
            _ if config.is_none() => {
                return Err(Error::Trace("first record must be the header".into()));
            }
            Record::Step(s) => steps.push(s),
            Record::Checkpoint(c) => checkpoints.push(c),
            Record::Summary(s) => summary = Some(s),
        }
    }
    let config = config.ok_or_else(|| Error::Trace("missing header".into()))?;
    let summary = summary.ok_or_else(|| Error::Trace("missing summary".into()))?;
    Ok(TraceFile {
        config,
        steps,
        checkpoints,
        summary,
    })
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceFile> {
    read_trace_from(File::open(path)?)
}
