//! Seeded Monte Carlo comparison of the adaptive and fixed-concentration
//! variants.
//!
//! Trial `t` uses training and test draws from streams
//! `(seed, TrainData, t)` and `(seed, TestData, t)` and engine seed
//! `seed + t`, shared by every variant so comparisons are paired. Trials run
//! on a rayon pool of at most `workers` threads; each owns its engine.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{heldout_loglik, Dataset};
use crate::diagnostics::{run_with_diagnostics, DiagnosticsPlan, Schedule};
use crate::engine::{EngineConfig, Selection};
use crate::error::{Error, Result};
use crate::mixture::GaussianMixture;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Asugs,
    AsugsPm,
    Sugs,
    SugsPm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Asugs,
        Variant::AsugsPm,
        Variant::Sugs,
        Variant::SugsPm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Asugs => "asugs",
            Variant::AsugsPm => "asugs-pm",
            Variant::Sugs => "sugs",
            Variant::SugsPm => "sugs-pm",
        }
    }

    /// The engine config for this variant. `base` supplies lambda, the prune
    /// and merge thresholds, the period, the prior, the seed and the
    /// selection rule of the adaptive variants; the fixed-alpha variants
    /// always take the argmax.
    pub fn config(self, base: &EngineConfig, sugs_alpha: f64) -> EngineConfig {
        let adaptive = matches!(self, Variant::Asugs | Variant::AsugsPm);
        let pm = matches!(self, Variant::AsugsPm | Variant::SugsPm);
        EngineConfig {
            selection: if adaptive {
                base.selection
            } else {
                Selection::Argmax
            },
            fixed_alpha: (!adaptive).then_some(sugs_alpha),
            prune_eps: if pm { base.prune_eps } else { 0.0 },
            merge_eps: if pm { base.merge_eps } else { 0.0 },
            ..base.clone()
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("variants", format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Base engine settings; `seed` is the base seed for every trial.
    pub base: EngineConfig,
    /// Concentration of the fixed-alpha variants.
    pub sugs_alpha: f64,
    pub trials: usize,
    /// Thread limit; 0 lets rayon decide.
    pub workers: usize,
    pub schedule: Schedule,
    pub variants: Vec<Variant>,
}

impl CompareConfig {
    pub fn new(base: EngineConfig, trials: usize) -> Self {
        CompareConfig {
            base,
            sugs_alpha: 1.0,
            trials,
            workers: 0,
            schedule: Schedule::default(),
            variants: Variant::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.sugs_alpha > 0.0) || !self.sugs_alpha.is_finite() {
            return Err(Error::config(
                "sugs_alpha",
                format!("must be > 0, got {}", self.sugs_alpha),
            ));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(Error::config("variants", "need at least one variant"));
        }
        Ok(())
    }
}

/// Where each trial's data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Fresh draws per trial.
    Generated {
        truth: GaussianMixture,
        n_train: usize,
        n_test: usize,
    },
    /// The same data for every trial; only the engine seed changes.
    Fixed {
        train: Dataset,
        test: Option<Dataset>,
    },
}

impl DataSource {
    fn dim(&self) -> usize {
        match self {
            DataSource::Generated { truth, .. } => truth.dim(),
            DataSource::Fixed { train, .. } => train.d,
        }
    }

    /// Training rows and optional test rows for trial `t`.
    pub fn trial_data(&self, seed: u64, t: u64) -> (Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
        match self {
            DataSource::Generated {
                truth,
                n_train,
                n_test,
            } => {
                let train = truth.sample(*n_train, &mut rng::stream(seed, Purpose::TrainData, t));
                let test = (*n_test > 0).then(|| {
                    truth
                        .sample(*n_test, &mut rng::stream(seed, Purpose::TestData, t))
                        .rows
                });
                (train.rows, test)
            }
            DataSource::Fixed { train, test } => {
                (train.rows.clone(), test.as_ref().map(|t| t.rows.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub variant: Variant,
    pub trial: u64,
    pub engine_seed: u64,
    pub final_k: usize,
    pub final_alpha: f64,
    pub heldout_per_sample: Option<f64>,
    pub runtime_secs: f64,
    /// `(n, k)` at every checkpoint, the last one at the end of the stream.
    pub k_trajectory: Vec<(u64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub variant: Variant,
    pub trial: u64,
    pub error: String,
}

/// Mean and population variance of `k` across trials at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KAggregate {
    pub variant: Variant,
    pub n: u64,
    pub trials: usize,
    pub mean_k: f64,
    pub var_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: CompareConfig,
    pub rows: Vec<TrialRow>,
    pub failures: Vec<TrialFailure>,
    pub aggregates: Vec<KAggregate>,
}

impl BenchReport {
    pub fn rows_for(&self, variant: Variant) -> impl Iterator<Item = &TrialRow> {
        self.rows.iter().filter(move |r| r.variant == variant)
    }

    /// Most common final `k` for a variant; ties go to the smaller count.
    pub fn modal_final_k(&self, variant: Variant) -> Option<usize> {
        let mut counts = std::collections::BTreeMap::new();
        for r in self.rows_for(variant) {
            *counts.entry(r.final_k).or_insert(0usize) += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
    }
}

/// Per-variant, per-checkpoint mean and population variance of `k`, in
/// variant then `n` order.
pub fn aggregate(rows: &[TrialRow]) -> Vec<KAggregate> {
    let mut groups: std::collections::BTreeMap<(Variant, u64), Vec<f64>> = Default::default();
    for r in rows {
        for &(n, k) in &r.k_trajectory {
            groups.entry((r.variant, n)).or_default().push(k as f64);
        }
    }
    groups
        .into_iter()
        .map(|((variant, n), ks)| {
            let m = ks.len() as f64;
            let mean_k = ks.iter().sum::<f64>() / m;
            let var_k = ks.iter().map(|k| (k - mean_k) * (k - mean_k)).sum::<f64>() / m;
            KAggregate {
                variant,
                n,
                trials: ks.len(),
                mean_k,
                var_k,
            }
        })
        .collect()
}

/// Run one trial of one variant.
pub fn run_trial(
    config: &CompareConfig,
    data: &DataSource,
    variant: Variant,
    trial: u64,
) -> Result<TrialRow> {
    let (train, test) = data.trial_data(config.base.seed, trial);
    let engine_seed = config.base.seed.wrapping_add(trial);
    let engine_config = variant
        .config(&config.base, config.sugs_alpha)
        .with_seed(engine_seed);
    let plan = DiagnosticsPlan {
        schedule: config.schedule.clone(),
        ..DiagnosticsPlan::default()
    };
    let started = Instant::now();
    let run = run_with_diagnostics(&train, &engine_config, &plan)?;
    let runtime_secs = started.elapsed().as_secs_f64();
    let heldout_per_sample = match &test {
        Some(t) if !t.is_empty() => Some(heldout_loglik(&run.book, t)?.per_sample),
        _ => None,
    };
    Ok(TrialRow {
        variant,
        trial,
        engine_seed,
        final_k: run.book.len(),
        final_alpha: engine_config
            .fixed_alpha
            .unwrap_or_else(|| run.conc.alpha()),
        heldout_per_sample,
        runtime_secs,
        k_trajectory: run.checkpoints.iter().map(|c| (c.n, c.k)).collect(),
    })
}

/// All variants over all trials. Failing trials are collected in
/// [`BenchReport::failures`]; the rest still run.
pub fn compare(config: &CompareConfig, data: &DataSource) -> Result<BenchReport> {
    config.validate()?;
    if data.dim() != config.base.dim() {
        return Err(Error::DimensionMismatch {
            expected: config.base.dim(),
            got: data.dim(),
        });
    }
    let jobs: Vec<(Variant, u64)> = (0..config.trials as u64)
        .flat_map(|t| config.variants.iter().map(move |&v| (v, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let results: Vec<(Variant, u64, Result<TrialRow>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, t)| (v, t, run_trial(config, data, v, t)))
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (variant, trial, res) in results {
        match res {
            Ok(r) => rows.push(r),
            Err(e) => failures.push(TrialFailure {
                variant,
                trial,
                error: e.to_string(),
            }),
        }
    }
    rows.sort_by_key(|r| (r.variant, r.trial));
    let aggregates = aggregate(&rows);
    Ok(BenchReport {
        config: config.clone(),
        rows,
        failures,
        aggregates,
    })
}
