use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// A finite Gaussian mixture `sum_h pi_h N(mu_h, Sigma_h)`, used as the
/// generating distribution and as ground truth in diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRecord", into = "MixtureRecord")]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    // derived
    chols: Vec<DMatrix<f64>>,
    log_norms: Vec<f64>,
}

/// Serialized form: plain nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MixtureRecord {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MixtureRecord> for GaussianMixture {
    type Error = Error;

    fn try_from(rec: MixtureRecord) -> Result<Self> {
        let d = rec.means.first().map_or(0, Vec::len);
        let means = rec
            .means
            .iter()
            .map(|m| DVector::from_column_slice(m))
            .collect();
        let covs = rec
            .covariances
            .iter()
            .map(|c| {
                if c.len() != d || c.iter().any(|row| row.len() != d) {
                    return Err(Error::config(
                        "covariances",
                        format!("each must be {d} x {d}"),
                    ));
                }
                Ok(DMatrix::from_fn(d, d, |i, j| c[i][j]))
            })
            .collect::<Result<_>>()?;
        GaussianMixture::new(rec.weights, means, covs)
    }
}

impl From<GaussianMixture> for MixtureRecord {
    fn from(m: GaussianMixture) -> Self {
        MixtureRecord {
            weights: m.weights,
            means: m
                .means
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
            covariances: m
                .covs
                .iter()
                .map(|c| c.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
        }
    }
}

impl GaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || covs.len() != k {
            return Err(Error::config(
                "weights",
                "need one weight, mean and covariance per component",
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("weights", "must be nonnegative"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::config("weights", "must sum to 1"));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::config(
                "means",
                "all means must share one nonzero dimension",
            ));
        }
        let mut chols = Vec::with_capacity(k);
        let mut log_norms = Vec::with_capacity(k);
        for cov in &covs {
            if cov.nrows() != d || cov.ncols() != d {
                return Err(Error::config(
                    "covariances",
                    format!("each must be {d} x {d}"),
                ));
            }
            if (cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
                return Err(Error::config("covariances", "must be symmetric"));
            }
            let l = cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::config("covariances", "must be positive definite"))?
                .l();
            let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            log_norms.push(-0.5 * (d as f64 * (2.0 * PI).ln() + log_det));
            chols.push(l);
        }
        Ok(GaussianMixture {
            weights,
            means,
            covs,
            chols,
            log_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covs
    }

    /// Log density of component `h` at `y`.
    pub fn component_log_pdf(&self, h: usize, y: &[f64]) -> f64 {
        self.log_norms[h] - 0.5 * mahalanobis(&self.chols[h], &self.means[h], y)
    }

    pub fn log_pdf(&self, y: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.len())
            .filter(|&h| self.weights[h] > 0.0)
            .map(|h| self.weights[h].ln() + self.component_log_pdf(h, y))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn pdf(&self, y: &[f64]) -> f64 {
        self.log_pdf(y).exp()
    }

    /// One draw and its component index.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut h = self.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                h = i;
                break;
            }
        }
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y = &self.means[h] + &self.chols[h] * z;
        (y.iter().copied().collect(), h)
    }

    /// `n` iid labelled draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let (rows, labels): (Vec<_>, Vec<_>) = (0..n).map(|_| self.draw(rng)).unzip();
        Dataset {
            d: self.dim(),
            rows,
            labels: Some(labels),
        }
    }

    /// Per-axis `(lo, hi)` box covering every mean `± span` max standard
    /// deviations.
    pub(crate) fn bounding_box(&self, span: f64) -> Vec<(f64, f64)> {
        let max_sd = self
            .covs
            .iter()
            .flat_map(|c| c.diagonal().iter().copied().collect::<Vec<_>>())
            .fold(0.0f64, f64::max)
            .sqrt();
        (0..self.dim())
            .map(|a| {
                let lo = self
                    .means
                    .iter()
                    .map(|m| m[a])
                    .fold(f64::INFINITY, f64::min);
                let hi = self
                    .means
                    .iter()
                    .map(|m| m[a])
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo - span * max_sd, hi + span * max_sd)
            })
            .collect()
    }
}

/// `(y - mu)' (L L')^-1 (y - mu)` for a lower Cholesky factor `L`.
pub(crate) fn mahalanobis(l: &DMatrix<f64>, mu: &DVector<f64>, y: &[f64]) -> f64 {
    let d = mu.len();
    let mut z = vec![0.0; d];
    let mut q = 0.0;
    for i in 0..d {
        let mut s = y[i] - mu[i];
        for j in 0..i {
            s -= l[(i, j)] * z[j];
        }
        z[i] = s / l[(i, i)];
        q += z[i] * z[i];
    }
    q
}

/// Log density of `N(mu, cov)` at `y`.
pub fn gaussian_log_pdf(mu: &DVector<f64>, cov: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let l = cov
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?
        .l();
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (mu.len() as f64 * (2.0 * PI).ln() + log_det + mahalanobis(&l, mu, y)))
}
