//! Synthetic grid mixtures, CSV ingestion and held-out scoring.
//!
//! CSV files are headerless: one observation per line, comma-separated
//! decimal numbers, the same number of fields on every line. Blank lines are
//! skipped. Values are written with Rust's shortest round-trip formatting, so
//! writing and re-reading a dataset is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::MixturePredictive;
use crate::engine::ClusterBook;
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d: usize,
    pub rows: Vec<Vec<f64>>,
    /// Generating component of each row, when known.
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows grouped by label (stable within a label), giving a structured
    /// rather than shuffled stream. Unlabelled data is returned unchanged.
    pub fn ordered_by_label(&self) -> Dataset {
        let Some(labels) = &self.labels else {
            return self.clone();
        };
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by_key(|&i| labels[i]);
        Dataset {
            d: self.d,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: Some(idx.iter().map(|&i| labels[i]).collect()),
        }
    }
}

/// `side x side` equally weighted isotropic 2D Gaussians with covariance
/// `sigma2 I`, centred on the origin with `spacing` between neighbours.
pub fn generate_grid_mixture(side: usize, sigma2: f64, spacing: f64) -> Result<GaussianMixture> {
    if side == 0 {
        return Err(Error::config("side", "must be at least 1"));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::config(
            "sigma2",
            format!("must be > 0, got {sigma2}"),
        ));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::config(
            "spacing",
            format!("must be > 0, got {spacing}"),
        ));
    }
    let k = side * side;
    let offset = (side as f64 - 1.0) / 2.0;
    let coord = |i: usize| (i as f64 - offset) * spacing;
    let means = (0..side)
        .flat_map(|r| (0..side).map(move |c| (r, c)))
        .map(|(r, c)| DVector::from_vec(vec![coord(c), coord(r)]))
        .collect();
    GaussianMixture::new(
        vec![1.0 / k as f64; k],
        means,
        vec![DMatrix::identity(2, 2) * sigma2; k],
    )
}

/// Parse headerless CSV from a reader. Errors carry the 1-based line number.
pub fn parse_csv(reader: impl Read) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut d = 0;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let row = text
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                let v: f64 = cell.parse().map_err(|_| Error::Ingest {
                    line: lineno,
                    reason: format!("not a number: {cell:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Ingest {
                        line: lineno,
                        reason: format!("non-finite value {cell:?}"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        if rows.is_empty() {
            d = row.len();
        } else if row.len() != d {
            return Err(Error::Ingest {
                line: lineno,
                reason: format!("expected {d} fields, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Ingest {
            line: 0,
            reason: "no data rows".into(),
        });
    }
    Ok(Dataset {
        d,
        rows,
        labels: None,
    })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_csv(File::open(path)?)
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// One label per line.
pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for l in labels {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_mixture(path: impl AsRef<Path>) -> Result<GaussianMixture> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_mixture(path: impl AsRef<Path>, mix: &GaussianMixture) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, mix)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOut {
    pub total: f64,
    pub per_sample: f64,
}

/// `sum ln Ltilde(y)` over the test rows, using live clusters only.
pub fn heldout_loglik<Y: AsRef<[f64]>>(book: &ClusterBook, test: &[Y]) -> Result<HeldOut> {
    if test.is_empty() {
        return Err(Error::Domain("held-out set is empty".into()));
    }
    let d = book.clusters().first().map(|c| c.post.dim());
    let mix = MixturePredictive::new(book)?;
    let mut total = 0.0;
    for y in test {
        let y = y.as_ref();
        if Some(y.len()) != d {
            return Err(Error::DimensionMismatch {
                expected: d.unwrap_or(0),
                got: y.len(),
            });
        }
        total += mix.log_density(y);
    }
    Ok(HeldOut {
        total,
        per_sample: total / test.len() as f64,
    })
}
