//! Conjugate Normal–Wishart state for a single cluster.
//!
//! Observations are `y ~ N(mu, T^-1)` with `mu | T ~ N(mu0, (c0 T)^-1)` and
//! `T ~ W(delta0, V0)` (Wishart with `2 delta0` degrees of freedom). Instead of
//! the Wishart scale `V` the state keeps `sigma = V^-1 / (2 delta)`, the
//! inverse of the Wishart mean, which reads directly as the cluster
//! covariance estimate.
//!
//! Integrating the parameters out gives a multivariate Student-t predictive
//! with `2 delta - d + 1` degrees of freedom:
//!
//! ```text
//! L(y) = rho_d(delta) (r / (2 delta pi))^(d/2) det(sigma)^(-1/2)
//!        (1 + r/(2 delta) (y - mu)' sigma^-1 (y - mu))^-(delta + 1/2)
//! rho_d(a) = Gamma(a + 1/2) / Gamma(a + (1 - d)/2),   r = c / (1 + c)
//! ```
//!
//! Everything here is in log domain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `ln Gamma(a + 1/2) - ln Gamma(a + (1 - d)/2)`.
pub fn log_rho_d(a: f64, d: usize) -> Result<f64> {
    let lower = a + (1.0 - d as f64) / 2.0;
    if !(lower > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!(
            "rho_d needs a + (1 - d)/2 > 0, got a = {a}, d = {d}"
        )));
    }
    let upper = a + 0.5;
    if lower < 20.0 {
        return Ok(ln_gamma(upper) - ln_gamma(lower));
    }
    // Differencing two huge ln Gamma values cancels badly, so subtract the
    // Stirling series term by term instead.
    let h = upper - lower;
    let leading = (lower - 0.5) * (h / lower).ln_1p() + h * upper.ln() - h;
    let tail = |x: f64| {
        let x2 = x * x;
        (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - 1.0 / (1680.0 * x2)) / x2) / x2) / x
    };
    Ok(leading + tail(upper) - tail(lower))
}

/// Hyperparameters of the base measure; every new cluster starts here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mu0: Vec<f64>,
    pub c0: f64,
    pub delta0: f64,
    /// Row-major `d x d`.
    pub sigma0: Vec<Vec<f64>>,
}

impl PriorConfig {
    /// Zero mean, `c0 = 1`, `delta0 = (d + 2)/2`, identity `sigma0`.
    pub fn standard(d: usize) -> Self {
        Self::isotropic(d, 1.0, (d as f64 + 2.0) / 2.0, 1.0)
    }

    /// Zero mean and `sigma0 = scale * I`.
    pub fn isotropic(d: usize, c0: f64, delta0: f64, scale: f64) -> Self {
        let sigma0 = (0..d)
            .map(|i| (0..d).map(|j| if i == j { scale } else { 0.0 }).collect())
            .collect();
        PriorConfig {
            mu0: vec![0.0; d],
            c0,
            delta0,
            sigma0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::config("prior.mu0", "dimension must be at least 1"));
        }
        if self.mu0.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("prior.mu0", "entries must be finite"));
        }
        if !(self.c0 > 0.0) || !self.c0.is_finite() {
            return Err(Error::config(
                "prior.c0",
                format!("must be > 0, got {}", self.c0),
            ));
        }
        if !(2.0 * self.delta0 > d as f64 - 1.0) || !self.delta0.is_finite() {
            return Err(Error::config(
                "prior.delta0",
                format!("need 2 delta0 > d - 1 (d = {d}), got {}", self.delta0),
            ));
        }
        if self.sigma0.len() != d || self.sigma0.iter().any(|row| row.len() != d) {
            return Err(Error::config("prior.sigma0", format!("must be {d} x {d}")));
        }
        let m = self.sigma0_matrix();
        if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
            return Err(Error::config("prior.sigma0", "must be symmetric"));
        }
        if m.iter().any(|v| !v.is_finite()) || m.cholesky().is_none() {
            return Err(Error::config("prior.sigma0", "must be positive definite"));
        }
        Ok(())
    }

    pub fn sigma0_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.sigma0[i][j])
    }

    pub fn posterior(&self) -> NiwPosterior {
        NiwPosterior {
            mu: DVector::from_column_slice(&self.mu0),
            c: self.c0,
            delta: self.delta0,
            sigma: self.sigma0_matrix(),
        }
    }
}

/// Normal–Wishart hyperparameters `(mu, c, delta, sigma)` of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPosterior {
    pub(crate) mu: DVector<f64>,
    pub(crate) c: f64,
    pub(crate) delta: f64,
    pub(crate) sigma: DMatrix<f64>,
}

impl NiwPosterior {
    pub fn new(mu: DVector<f64>, c: f64, delta: f64, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: sigma.nrows(),
            });
        }
        if !(c > 0.0) {
            return Err(Error::Domain(format!("c must be positive, got {c}")));
        }
        if !(2.0 * delta > d as f64 - 1.0) {
            return Err(Error::Domain(format!(
                "delta = {delta} too small for d = {d}"
            )));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(NiwPosterior {
            mu,
            c,
            delta,
            sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `c / (1 + c)`.
    pub fn r(&self) -> f64 {
        self.c / (1.0 + self.c)
    }

    /// Absorb one observation:
    ///
    /// ```text
    /// mu'    = y/(1+c) + c mu/(1+c)
    /// c'     = c + 1
    /// sigma' = 2δ/(1+2δ) sigma + 1/(1+2δ) c/(1+c) (y - mu)(y - mu)'
    /// delta' = delta + 1/2
    /// ```
    ///
    /// The rank-one term uses the mean from before the update.
    pub fn update(&mut self, y: &[f64]) -> Result<()> {
        self.check_dim(y)?;
        let d = self.dim();
        let resid = DVector::from_iterator(d, y.iter().zip(self.mu.iter()).map(|(a, b)| a - b));
        let two_delta = 2.0 * self.delta;
        let keep = two_delta / (1.0 + two_delta);
        let spread = self.r() / (1.0 + two_delta);

        self.sigma *= keep;
        self.sigma.ger(spread, &resid, &resid, 1.0);
        // symmetrize to stop rounding drift in the rank-one term
        for i in 0..d {
            for j in 0..i {
                let avg = 0.5 * (self.sigma[(i, j)] + self.sigma[(j, i)]);
                self.sigma[(i, j)] = avg;
                self.sigma[(j, i)] = avg;
            }
        }

        let inv = 1.0 / (1.0 + self.c);
        // y/(1+c) + c mu/(1+c), written as a step along the residual
        self.mu.axpy(inv, &resid, 1.0);
        self.c += 1.0;
        self.delta += 0.5;
        Ok(())
    }

    /// Value-semantics form of [`update`](Self::update).
    pub fn updated(&self, y: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.update(y)?;
        Ok(next)
    }

    /// Factorize once for repeated density evaluation.
    pub fn predictive(&self) -> Result<PredictiveDensity> {
        PredictiveDensity::new(self)
    }

    pub(crate) fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        Ok(())
    }
}

/// The normalized predictive density of a [`NiwPosterior`], with the
/// Cholesky factor of `sigma` and all constants precomputed.
#[derive(Debug, Clone)]
pub struct PredictiveDensity {
    mu: Vec<f64>,
    /// Lower Cholesky factor of `sigma`, row-major.
    chol: Vec<f64>,
    log_norm: f64,
    coef: f64,
    power: f64,
}

impl PredictiveDensity {
    pub fn new(post: &NiwPosterior) -> Result<Self> {
        let d = post.dim();
        let chol = post
            .sigma
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let r = post.r();
        let two_delta = 2.0 * post.delta;
        let log_norm = log_rho_d(post.delta, d)? + 0.5 * d as f64 * (r / (two_delta * PI)).ln()
            - 0.5 * log_det;
        let chol = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| chol[(i, j)])
            .collect();
        Ok(PredictiveDensity {
            mu: post.mu.iter().copied().collect(),
            chol,
            log_norm,
            coef: r / two_delta,
            power: post.delta + 0.5,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Mahalanobis distance `(y - mu)' sigma^-1 (y - mu)` by forward
    /// substitution.
    pub fn mahalanobis(&self, y: &[f64]) -> f64 {
        let d = self.dim();
        let mut z = [0.0; 8];
        let mut heap;
        let z: &mut [f64] = if d <= z.len() {
            &mut z[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut q = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let s: f64 = row.iter().zip(z.iter()).map(|(l, zj)| l * zj).sum();
            z[i] = (y[i] - self.mu[i] - s) / self.chol[i * d + i];
            q += z[i] * z[i];
        }
        q
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        self.log_norm - self.power * (self.coef * self.mahalanobis(y)).ln_1p()
    }
}

/// Log of the normalized predictive density of `y` under `post`.
pub fn log_predictive_density(post: &NiwPosterior, y: &[f64]) -> Result<f64> {
    post.check_dim(y)?;
    Ok(PredictiveDensity::new(post)?.log_density(y))
}

/// New-cluster predictive: [`log_predictive_density`] at the prior state.
pub fn prior_predictive(prior: &PriorConfig, y: &[f64]) -> Result<f64> {
    log_predictive_density(&prior.posterior(), y)
}
