//! The sequential assignment loop.
//!
//! Each observation goes through three moves:
//!
//! 1. pick the concentration: `alpha = k / (lambda + ln n)` (adaptive) or a
//!    fixed value;
//! 2. score every live cluster and a fresh one by predictive density times
//!    Dirichlet-process prior weight, then sample a label from the normalized
//!    scores or take the argmax;
//! 3. absorb the observation into the chosen cluster's posterior, creating the
//!    cluster first if the fresh slot won.
//!
//! Every `maintenance_period` observations (and once at the end of a run) a
//! prune sweep and then a merge sweep tidy up the book.

mod book;
mod concentration;
mod maintenance;

pub use book::{predictive_prior_weights, responsibilities, Cluster, ClusterBook, PairAccumulator};
pub use concentration::{adapt_alpha, ConcentrationState};
pub use maintenance::{merge, prune};

use serde::{Deserialize, Serialize};

use crate::diagnostics::Checkpoint;
use crate::error::{Error, Result};
use crate::niw::{PredictiveDensity, PriorConfig};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Draw the label from the responsibilities.
    Sample,
    /// Take the most probable label; ties go to the lowest index.
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub lambda: f64,
    pub selection: Selection,
    /// Use this concentration for every step instead of adapting it.
    pub fixed_alpha: Option<f64>,
    pub prune_eps: f64,
    pub merge_eps: f64,
    pub maintenance_period: u64,
    pub seed: u64,
    pub prior: PriorConfig,
}

pub const DEFAULT_PRUNE_EPS: f64 = 0.005;
pub const DEFAULT_MERGE_EPS: f64 = 0.02;
pub const DEFAULT_MAINTENANCE_PERIOD: u64 = 50;

impl EngineConfig {
    /// Adaptive concentration, sampled labels, no prune / merge.
    pub fn asugs(d: usize) -> Self {
        EngineConfig {
            lambda: 1.0,
            selection: Selection::Sample,
            fixed_alpha: None,
            prune_eps: 0.0,
            merge_eps: 0.0,
            maintenance_period: DEFAULT_MAINTENANCE_PERIOD,
            seed: 0,
            prior: PriorConfig::standard(d),
        }
    }

    /// [`asugs`](Self::asugs) with the default prune and merge thresholds.
    pub fn asugs_pm(d: usize) -> Self {
        EngineConfig {
            prune_eps: DEFAULT_PRUNE_EPS,
            merge_eps: DEFAULT_MERGE_EPS,
            ..Self::asugs(d)
        }
    }

    /// Fixed concentration with argmax labels.
    pub fn sugs(d: usize, alpha: f64) -> Self {
        EngineConfig {
            selection: Selection::Argmax,
            fixed_alpha: Some(alpha),
            ..Self::asugs(d)
        }
    }

    pub fn sugs_pm(d: usize, alpha: f64) -> Self {
        EngineConfig {
            prune_eps: DEFAULT_PRUNE_EPS,
            merge_eps: DEFAULT_MERGE_EPS,
            ..Self::sugs(d, alpha)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_prior(mut self, prior: PriorConfig) -> Self {
        self.prior = prior;
        self
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(
                "lambda",
                format!("must be > 0, got {}", self.lambda),
            ));
        }
        if let Some(a) = self.fixed_alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::config(
                    "fixed_alpha",
                    format!("must be > 0, got {a}"),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.prune_eps) {
            return Err(Error::config(
                "prune_eps",
                format!("must lie in [0, 1), got {}", self.prune_eps),
            ));
        }
        if !(self.merge_eps >= 0.0) || !self.merge_eps.is_finite() {
            return Err(Error::config(
                "merge_eps",
                format!("must be >= 0, got {}", self.merge_eps),
            ));
        }
        if self.maintenance_period == 0 {
            return Err(Error::config("maintenance_period", "must be at least 1"));
        }
        self.prior.validate()
    }
}

/// What happened to one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based position in the stream.
    pub index: u64,
    /// Id of the cluster that received the observation.
    pub label: u64,
    /// Position of that cluster in `q`; the last slot is the new cluster.
    pub slot: usize,
    pub q: Vec<f64>,
    pub alpha: f64,
    /// Live clusters after the step (before any maintenance sweep).
    pub k: usize,
    pub innovation: bool,
    /// Log likelihood ratio of the new-cluster predictive over the fitted
    /// mixture at this observation; absent for the first observation.
    pub log_lr: Option<f64>,
}

/// Process one observation. `rng` is only used with [`Selection::Sample`].
pub fn step<R: rand::Rng + ?Sized>(
    book: &mut ClusterBook,
    conc: &mut ConcentrationState,
    y: &[f64],
    config: &EngineConfig,
    rng: &mut R,
) -> Result<StepRecord> {
    let prior_density = config.prior.posterior().predictive()?;
    step_with(book, conc, y, config, &prior_density, rng)
}

fn step_with<R: rand::Rng + ?Sized>(
    book: &mut ClusterBook,
    conc: &mut ConcentrationState,
    y: &[f64],
    config: &EngineConfig,
    prior_density: &PredictiveDensity,
    rng: &mut R,
) -> Result<StepRecord> {
    if y.len() != config.dim() {
        return Err(Error::DimensionMismatch {
            expected: config.dim(),
            got: y.len(),
        });
    }
    // the very first observation opens cluster 1 unconditionally; record the
    // prior mean 1/lambda as its concentration
    let alpha = match config.fixed_alpha {
        Some(a) => a,
        None if book.is_empty() && conc.n == 0 => 1.0 / config.lambda,
        None => conc.alpha(),
    };
    let scores = book::score(book, y, alpha, prior_density)?;
    let q = scores.q;
    let k = book.len();

    let slot = if k == 0 {
        0
    } else {
        match config.selection {
            Selection::Argmax => {
                let mut best = 0;
                for (h, &v) in q.iter().enumerate() {
                    if v > q[best] {
                        best = h;
                    }
                }
                best
            }
            Selection::Sample => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = q.len() - 1;
                for (h, &v) in q.iter().enumerate() {
                    acc += v;
                    if u < acc {
                        pick = h;
                        break;
                    }
                }
                pick
            }
        }
    };
    let innovation = slot == k;
    if innovation {
        // the new cluster had zero responsibility so far, so its distance to
        // each older cluster starts at that cluster's running weight
        book.push_cluster(config.prior.posterior(), 0, 0.0, |b, j| b.clusters[j].w);
        conc.k += 1;
    }

    let live = book.len();
    for (c, &qh) in book.clusters.iter_mut().zip(&q) {
        c.w += qh;
    }
    for a in 1..live {
        for b in 0..a {
            book.dist.add(a, b, (q[a] - q[b]).abs());
        }
    }
    let chosen = &mut book.clusters[slot];
    chosen.post.update(y)?;
    chosen.m += 1;
    let label = chosen.id;
    book.n += 1;
    conc.n += 1;

    Ok(StepRecord {
        index: book.n,
        label,
        slot,
        q,
        alpha,
        k: book.len(),
        innovation,
        log_lr: scores.log_lr,
    })
}

/// Stateful driver: one book, one concentration state and one RNG stream.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    book: ClusterBook,
    conc: ConcentrationState,
    rng: rng::Rng,
    prior_density: PredictiveDensity,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let prior_density = config.prior.posterior().predictive()?;
        Ok(Engine {
            rng: rng::stream(config.seed, Purpose::Engine, 0),
            conc: ConcentrationState::new(0, config.lambda, 0),
            book: ClusterBook::new(),
            config,
            prior_density,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn book(&self) -> &ClusterBook {
        &self.book
    }

    pub fn concentration(&self) -> &ConcentrationState {
        &self.conc
    }

    /// Concentration the next step would use.
    pub fn alpha(&self) -> f64 {
        self.config.fixed_alpha.unwrap_or_else(|| self.conc.alpha())
    }

    /// Process one observation, then run the maintenance sweep if the period
    /// is due.
    pub fn observe(&mut self, y: &[f64]) -> Result<StepRecord> {
        let record = step_with(
            &mut self.book,
            &mut self.conc,
            y,
            &self.config,
            &self.prior_density,
            &mut self.rng,
        )
        .map_err(|e| Error::Step {
            index: self.book.n + 1,
            source: Box::new(e),
        })?;
        if self.book.n.is_multiple_of(self.config.maintenance_period) {
            self.maintain();
        }
        Ok(record)
    }

    /// Prune then merge; returns `(pruned, merged)`.
    pub fn maintain(&mut self) -> (usize, usize) {
        let pruned = prune(&mut self.book, &mut self.conc, self.config.prune_eps);
        let merged = merge(&mut self.book, &mut self.conc, self.config.merge_eps);
        (pruned, merged)
    }

    /// Final sweep (unless one just ran) and hand back the state.
    pub fn finish(mut self) -> (ClusterBook, ConcentrationState) {
        if !self.book.n.is_multiple_of(self.config.maintenance_period) {
            self.maintain();
        }
        (self.book, self.conc)
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub config: EngineConfig,
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub book: ClusterBook,
    pub conc: ConcentrationState,
}

impl RunTrace {
    /// Class count after each step, as `f64` for curve fitting.
    pub fn class_counts(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.k as f64).collect()
    }

    pub fn labels(&self) -> Vec<u64> {
        self.steps.iter().map(|s| s.label).collect()
    }
}

/// Run the engine over a whole stream.
pub fn run<Y: AsRef<[f64]>>(stream: &[Y], config: &EngineConfig) -> Result<RunTrace> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut engine = Engine::new(config.clone())?;
    let steps = stream
        .iter()
        .map(|y| engine.observe(y.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let (book, conc) = engine.finish();
    Ok(RunTrace {
        config: config.clone(),
        steps,
        checkpoints: Vec::new(),
        book,
        conc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i % 7) as f64 * 0.1]).collect()
    }

    #[test]
    fn first_observation_opens_cluster() {
        let config = EngineConfig::asugs(1);
        let trace = run(&[vec![3.0]], &config).unwrap();
        assert_eq!(trace.steps.len(), 1);
        let s = &trace.steps[0];
        assert_eq!((s.label, s.slot, s.k, s.innovation), (0, 0, 1, true));
        assert_eq!(s.q, vec![1.0]);
        assert_eq!(s.log_lr, None);
        assert_eq!(trace.book.len(), 1);
        assert_eq!(trace.book.clusters()[0].m, 1);
        assert_eq!(trace.conc.k, 1);
    }

    #[test]
    fn argmax_keeps_point_in_dominant_cluster() {
        let config = EngineConfig::sugs(1, 1e-6);
        let mut book = ClusterBook::new();
        let mut conc = ConcentrationState::new(0, 1.0, 0);
        let mut rng = stream(0, Purpose::Engine, 0);
        for _ in 0..20 {
            step(&mut book, &mut conc, &[0.5], &config, &mut rng).unwrap();
        }
        let r = step(&mut book, &mut conc, &[0.5], &config, &mut rng).unwrap();
        assert_eq!(r.slot, 0);
        assert!(!r.innovation);
        assert_eq!(book.len(), 1);
    }

    #[test]
    fn run_is_deterministic() {
        let data = line(200);
        let config = EngineConfig::asugs_pm(1).with_seed(11);
        let a = run(&data, &config).unwrap();
        let b = run(&data, &config).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.book, b.book);
    }

    #[test]
    fn dimension_mismatch_names_index() {
        let data = vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0]];
        let err = run(&data, &EngineConfig::asugs(2)).unwrap_err();
        assert!(matches!(err, Error::Step { index: 3, .. }), "{err}");
    }

    #[test]
    fn empty_stream_is_an_error() {
        let data: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(
            run(&data, &EngineConfig::asugs(1)),
            Err(Error::EmptyStream)
        ));
    }

    #[test]
    fn config_validation_names_field() {
        let mut c = EngineConfig::asugs(2);
        c.lambda = 0.0;
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidConfig {
                field: "lambda",
                ..
            })
        ));
        let mut c = EngineConfig::asugs(2);
        c.prune_eps = 1.0;
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidConfig {
                field: "prune_eps",
                ..
            })
        ));
        let mut c = EngineConfig::asugs(2);
        c.fixed_alpha = Some(-1.0);
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidConfig {
                field: "fixed_alpha",
                ..
            })
        ));
        let mut c = EngineConfig::asugs(2);
        c.maintenance_period = 0;
        assert!(matches!(
            c.validate(),
            Err(Error::InvalidConfig {
                field: "maintenance_period",
                ..
            })
        ));
    }

    #[test]
    fn weights_and_counts_stay_consistent() {
        let data = line(300);
        let trace = run(&data, &EngineConfig::asugs_pm(1).with_seed(5)).unwrap();
        let book = &trace.book;
        assert_eq!(book.assigned() + book.dropped(), book.n());
        let wsum: f64 = book.clusters().iter().map(|c| c.w).sum();
        assert!(wsum <= book.n() as f64 + 1e-9);
        for s in &trace.steps {
            assert!((s.q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(s.q.iter().all(|&v| v >= 0.0));
            assert!(s.alpha > 0.0);
        }
    }
}
