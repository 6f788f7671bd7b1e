//! Measurements that tie a fitted book back to the asymptotic behaviour of
//! the algorithm: the fitted mixture predictive and its likelihood ratio
//! against the new-cluster predictive, distances to the generating mixture,
//! class-count growth, and a couple of numeric identities about products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::{ClusterBook, Engine, EngineConfig, RunTrace};
use crate::error::{Error, Result};
use crate::mixture::{gaussian_log_pdf, GaussianMixture};
use crate::niw::{prior_predictive, NiwPosterior, PredictiveDensity, PriorConfig};
use crate::numeric::{log_sum_exp, ols_slope, CompensatedSum};
use crate::rng::{self, Purpose};

/// A Monte Carlo (or exact, with zero error) estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

/// The fitted mixture `Ltilde(y) = sum_h (m_h / N) L_h(y)` over live
/// clusters, prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct MixturePredictive {
    log_weights: Vec<f64>,
    densities: Vec<PredictiveDensity>,
}

impl MixturePredictive {
    pub fn new(book: &ClusterBook) -> Result<Self> {
        if book.is_empty() || book.assigned() == 0 {
            return Err(Error::Domain(
                "mixture predictive needs at least one observation".into(),
            ));
        }
        let total = book.assigned() as f64;
        Ok(MixturePredictive {
            log_weights: book
                .clusters()
                .iter()
                .map(|c| (c.m as f64 / total).ln())
                .collect(),
            densities: book.predictives()?,
        })
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let mut terms = [0.0; 32];
        if self.densities.len() <= terms.len() {
            let terms = &mut terms[..self.densities.len()];
            for (t, (lw, dens)) in terms
                .iter_mut()
                .zip(self.log_weights.iter().zip(&self.densities))
            {
                *t = lw + dens.log_density(y);
            }
            log_sum_exp(terms)
        } else {
            let terms: Vec<f64> = self
                .log_weights
                .iter()
                .zip(&self.densities)
                .map(|(lw, dens)| lw + dens.log_density(y))
                .collect();
            log_sum_exp(&terms)
        }
    }
}

/// `Ltilde(y)`, the count-weighted mixture of cluster predictives.
pub fn mixture_predictive(book: &ClusterBook, y: &[f64]) -> Result<f64> {
    Ok(MixturePredictive::new(book)?.log_density(y).exp())
}

/// `L_0(y) / Ltilde(y)`: new-cluster predictive over the fitted mixture.
pub fn likelihood_ratio(book: &ClusterBook, prior: &PriorConfig, y: &[f64]) -> Result<f64> {
    Ok(log_likelihood_ratio(book, prior, y)?.exp())
}

pub fn log_likelihood_ratio(book: &ClusterBook, prior: &PriorConfig, y: &[f64]) -> Result<f64> {
    Ok(prior_predictive(prior, y)? - MixturePredictive::new(book)?.log_density(y))
}

/// Probability that `y` opens a new cluster at concentration `alpha`,
/// `l alpha / (N + l alpha)` with `l` the likelihood ratio and `N = sum(m)`.
pub fn innovation_probability(
    book: &ClusterBook,
    alpha: f64,
    prior: &PriorConfig,
    y: &[f64],
) -> Result<f64> {
    let log_odds =
        log_likelihood_ratio(book, prior, y)? + alpha.ln() - (book.assigned() as f64).ln();
    Ok(if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    })
}

/// Number of grid points per axis for L2 quadrature.
pub const L2_GRID_POINTS: usize = 400;
/// Half-width of the quadrature box in maximum component standard deviations.
pub const L2_GRID_SPAN: f64 = 6.0;

/// `(integral (Ltilde - p_T)^2)^(1/2)`.
///
/// For `d <= 2` this is midpoint quadrature on a [`L2_GRID_POINTS`]-per-axis
/// grid spanning the truth's means ± [`L2_GRID_SPAN`] maximum standard
/// deviations, reported with zero standard error. Higher dimensions use
/// importance sampling from `p_T` with `n_mc` draws.
pub fn l2_distance_to_truth(
    book: &ClusterBook,
    truth: &GaussianMixture,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    let mix = MixturePredictive::new(book)?;
    l2_distance(|y| mix.log_density(y).exp(), truth, n_mc, seed)
}

pub(crate) fn l2_distance(
    fitted: impl Fn(&[f64]) -> f64,
    truth: &GaussianMixture,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    let d = truth.dim();
    if d <= 2 {
        let bounds = truth.bounding_box(L2_GRID_SPAN);
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .map(|&(lo, hi)| {
                let h = (hi - lo) / L2_GRID_POINTS as f64;
                (0..L2_GRID_POINTS)
                    .map(|i| lo + (i as f64 + 0.5) * h)
                    .collect()
            })
            .collect();
        let cell: f64 = bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) / L2_GRID_POINTS as f64)
            .product();
        let mut sum = CompensatedSum::default();
        let mut y = vec![0.0; d];
        let mut visit = |y: &[f64]| {
            let diff = fitted(y) - truth.pdf(y);
            sum.add(diff * diff);
        };
        if d == 1 {
            for &x in &axes[0] {
                y[0] = x;
                visit(&y);
            }
        } else {
            for &x0 in &axes[0] {
                for &x1 in &axes[1] {
                    y[0] = x0;
                    y[1] = x1;
                    visit(&y);
                }
            }
        }
        return Ok(Estimate {
            value: (sum.value() * cell).sqrt(),
            std_err: 0.0,
        });
    }
    if n_mc < 2 {
        return Err(Error::Domain(
            "Monte Carlo L2 distance needs n_mc >= 2".into(),
        ));
    }
    let mut rng = rng::stream(seed, Purpose::Integration, 0);
    let vals: Vec<f64> = (0..n_mc)
        .map(|_| {
            let (y, _) = truth.draw(&mut rng);
            let p = truth.pdf(&y);
            let diff = fitted(&y) - p;
            diff * diff / p
        })
        .collect();
    let (mean, se) = mean_and_se(&vals);
    let value = mean.max(0.0).sqrt();
    let std_err = if value > 0.0 {
        se / (2.0 * value)
    } else {
        se.sqrt()
    };
    Ok(Estimate { value, std_err })
}

fn mean_and_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of `KL(p_T || Ltilde)` from `n_mc` draws of `p_T`.
///
/// The same `seed` always yields the same draws, so estimates at different
/// checkpoints of one run share their random numbers. The estimate can dip
/// slightly below zero within its standard error.
pub fn kl_divergence_estimate(
    truth: &GaussianMixture,
    book: &ClusterBook,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    let mix = MixturePredictive::new(book)?;
    kl_divergence(truth, |y| mix.log_density(y), n_mc, seed)
}

pub(crate) fn kl_divergence(
    truth: &GaussianMixture,
    fitted_log: impl Fn(&[f64]) -> f64,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_mc < 2 {
        return Err(Error::Domain("KL estimate needs n_mc >= 2".into()));
    }
    let mut rng = rng::stream(seed, Purpose::Integration, 0);
    let vals: Vec<f64> = (0..n_mc)
        .map(|_| {
            let (y, _) = truth.draw(&mut rng);
            truth.log_pdf(&y) - fitted_log(&y)
        })
        .collect();
    let (value, std_err) = mean_and_se(&vals);
    Ok(Estimate { value, std_err })
}

/// `sum_{j=1}^{n-1} ln(1 + alpha/j) / (alpha ln n)`, which tends to 1.
pub fn rising_product_ratio(alpha: f64, n: u64) -> Result<f64> {
    if !(alpha > 0.0) || n < 2 {
        return Err(Error::Domain(format!(
            "need alpha > 0 and n >= 2, got {alpha}, {n}"
        )));
    }
    let mut sum = CompensatedSum::default();
    for j in 1..n {
        sum.add((alpha / j as f64).ln_1p());
    }
    Ok(sum.value() / (alpha * (n as f64).ln()))
}

/// Outcome of [`product_bound_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub phi: f64,
    pub start: u64,
    pub n_max: u64,
    pub holds: bool,
    /// Smallest `ln(bound) - ln(product)` seen.
    pub min_slack: f64,
    pub min_slack_at: u64,
    /// Log slack at `n = start`, powers of two and `n_max`.
    pub margins: Vec<(u64, f64)>,
}

/// Check `prod_{k=N}^{n} (1 + phi/(k ln k)) <= C ln^phi n` with
/// `C = exp(phi/(N ln N)) / ln^phi N` for every `n` in `N..=n_max`, in log
/// domain.
pub fn product_bound_check(phi: f64, start: u64, n_max: u64) -> Result<BoundCheck> {
    if !(phi > 0.0) || start < 2 || n_max < start {
        return Err(Error::Domain(format!(
            "need phi > 0, N >= 2 and n_max >= N, got {phi}, {start}, {n_max}"
        )));
    }
    let ln_ln = |k: u64| (k as f64).ln().ln();
    let big_n = start as f64;
    let log_c = phi / (big_n * big_n.ln()) - phi * ln_ln(start);
    let mut log_prod = CompensatedSum::default();
    let mut min_slack = f64::INFINITY;
    let mut min_slack_at = start;
    let mut margins = Vec::new();
    for n in start..=n_max {
        let nf = n as f64;
        log_prod.add((phi / (nf * nf.ln())).ln_1p());
        let slack = log_c + phi * ln_ln(n) - log_prod.value();
        if slack < min_slack {
            min_slack = slack;
            min_slack_at = n;
        }
        if n == start || n == n_max || n.is_power_of_two() {
            margins.push((n, slack));
        }
    }
    Ok(BoundCheck {
        phi,
        start,
        n_max,
        holds: min_slack >= 0.0,
        min_slack,
        min_slack_at,
        margins,
    })
}

/// Sup-norm gap between a cluster's predictive density and `N(mean, cov)`,
/// over an `n_grid`-per-axis grid spanning `mean ± 6` standard deviations.
/// Only `d <= 2`.
pub fn gaussian_limit_deviation(
    post: &NiwPosterior,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    n_grid: usize,
) -> Result<f64> {
    let d = post.dim();
    if d > 2 || mean.len() != d || cov.nrows() != d {
        return Err(Error::Domain(format!(
            "grid deviation supports d <= 2 with matching shapes, got d = {d}"
        )));
    }
    if n_grid < 2 {
        return Err(Error::Domain("n_grid must be at least 2".into()));
    }
    let pred = post.predictive()?;
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let sd = cov[(a, a)].sqrt();
            let (lo, hi) = (mean[a] - 6.0 * sd, mean[a] + 6.0 * sd);
            (0..n_grid)
                .map(|i| lo + (hi - lo) * i as f64 / (n_grid - 1) as f64)
                .collect()
        })
        .collect();
    let mut worst = 0.0f64;
    let mut check = |y: &[f64]| -> Result<()> {
        let gap = (pred.log_density(y).exp() - gaussian_log_pdf(mean, cov, y)?.exp()).abs();
        worst = worst.max(gap);
        Ok(())
    };
    if d == 1 {
        for &x in &axes[0] {
            check(&[x])?;
        }
    } else {
        for &x0 in &axes[0] {
            for &x1 in &axes[1] {
                check(&[x0, x1])?;
            }
        }
    }
    Ok(worst)
}

/// Least-squares slope of `ln k_n` on `ln ln n` over the trailing half of a
/// run. A constant class count gives 0.
pub fn growth_exponent(trace: &RunTrace) -> Result<f64> {
    growth_exponent_of_counts(&trace.class_counts())
}

/// [`growth_exponent`] on a bare class-count series (`ks[i]` is `k` at
/// `n = i + 1`).
pub fn growth_exponent_of_counts(ks: &[f64]) -> Result<f64> {
    if ks.len() < 100 {
        return Err(Error::Domain(format!(
            "growth exponent needs >= 100 steps, got {}",
            ks.len()
        )));
    }
    if ks.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::Domain("class counts must be positive".into()));
    }
    let start = ks.len() / 2;
    if ks[start..].iter().all(|&k| k == ks[start]) {
        return Ok(0.0);
    }
    let xs: Vec<f64> = (start..ks.len())
        .map(|i| ((i + 1) as f64).ln().ln())
        .collect();
    let ys: Vec<f64> = ks[start..].iter().map(|k| k.ln()).collect();
    Ok(ols_slope(&xs, &ys).0)
}

/// Least-squares slope and its standard error.
pub fn linear_trend(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    ols_slope(xs, ys)
}

/// When to record a [`Checkpoint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `first, 2 first, 4 first, ...`
    Geometric {
        first: u64,
    },
    Every {
        period: u64,
    },
    At {
        points: Vec<u64>,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Geometric { first: 10 }
    }
}

impl Schedule {
    pub fn contains(&self, n: u64) -> bool {
        match self {
            Schedule::Geometric { first } => {
                *first > 0
                    && n >= *first
                    && n.is_multiple_of(*first)
                    && (n / first).is_power_of_two()
            }
            Schedule::Every { period } => *period > 0 && n.is_multiple_of(*period),
            Schedule::At { points } => points.contains(&n),
        }
    }
}

/// Diagnostics recorded at one point of a run, after any maintenance sweep
/// due at that point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub k: usize,
    /// Concentration for the next step.
    pub alpha: f64,
    /// `ln l_n(y_n)` at the observation that closed this checkpoint.
    pub log_lr: Option<f64>,
    /// Mean of `l_i(y_i)` over observations since the previous checkpoint.
    pub window_mean_lr: Option<f64>,
    pub l2_distance: Option<f64>,
    pub kl: Option<Estimate>,
    /// Mean held-out `ln Ltilde(y)`.
    pub heldout_loglik: Option<f64>,
    /// Largest `ln l(y)` over the held-out set.
    pub heldout_max_log_lr: Option<f64>,
}

/// Optional measurements taken at each checkpoint.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsPlan {
    pub schedule: Schedule,
    pub truth: Option<GaussianMixture>,
    /// Monte Carlo draws for KL (and L2 when `d > 2`); zero disables KL.
    pub kl_samples: usize,
    pub kl_seed: u64,
    /// Compute the L2 distance (needs `truth`).
    pub l2: bool,
    pub heldout: Option<Vec<Vec<f64>>>,
}

/// [`engine::run`](crate::engine::run) plus checkpointed diagnostics.
pub fn run_with_diagnostics<Y: AsRef<[f64]>>(
    stream: &[Y],
    config: &EngineConfig,
    plan: &DiagnosticsPlan,
) -> Result<RunTrace> {
    if stream.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut engine = Engine::new(config.clone())?;
    let mut steps = Vec::with_capacity(stream.len());
    let mut checkpoints = Vec::new();
    let mut window = Vec::new();
    for y in stream {
        let rec = engine.observe(y.as_ref())?;
        if let Some(l) = rec.log_lr {
            window.push(l);
        }
        let n = rec.index;
        let log_lr = rec.log_lr;
        steps.push(rec);
        if plan.schedule.contains(n) {
            checkpoints.push(checkpoint(
                engine.book(),
                engine.alpha(),
                &config.prior,
                log_lr,
                &window,
                plan,
            )?);
            window.clear();
        }
    }
    let last_lr = steps.last().and_then(|s| s.log_lr);
    let (book, conc) = engine.finish();
    let alpha = config.fixed_alpha.unwrap_or_else(|| conc.alpha());
    let n = book.n();
    if checkpoints.last().is_none_or(|c| c.n != n) {
        checkpoints.push(checkpoint(
            &book,
            alpha,
            &config.prior,
            last_lr,
            &window,
            plan,
        )?);
    }
    Ok(RunTrace {
        config: config.clone(),
        steps,
        checkpoints,
        book,
        conc,
    })
}

fn checkpoint(
    book: &ClusterBook,
    alpha: f64,
    prior: &PriorConfig,
    log_lr: Option<f64>,
    window: &[f64],
    plan: &DiagnosticsPlan,
) -> Result<Checkpoint> {
    let mix = MixturePredictive::new(book)?;
    let window_mean_lr = (!window.is_empty()).then(|| {
        (log_sum_exp(window) - (window.len() as f64).ln())
            .exp()
            .min(f64::MAX)
    });
    let (mut l2_distance, mut kl) = (None, None);
    if let Some(truth) = &plan.truth {
        if plan.l2 {
            l2_distance =
                Some(l2_distance_fn(&mix, truth, plan.kl_samples.max(2), plan.kl_seed)?.value);
        }
        if plan.kl_samples >= 2 {
            kl = Some(kl_divergence(
                truth,
                |y| mix.log_density(y),
                plan.kl_samples,
                plan.kl_seed,
            )?);
        }
    }
    let (mut heldout_loglik, mut heldout_max_log_lr) = (None, None);
    if let Some(test) = plan.heldout.as_ref().filter(|t| !t.is_empty()) {
        let prior_density = prior.posterior().predictive()?;
        let mut total = 0.0;
        let mut worst = f64::NEG_INFINITY;
        for y in test {
            let lm = mix.log_density(y);
            total += lm;
            worst = worst.max(prior_density.log_density(y) - lm);
        }
        heldout_loglik = Some(total / test.len() as f64);
        heldout_max_log_lr = Some(worst);
    }
    Ok(Checkpoint {
        n: book.n(),
        k: book.len(),
        alpha,
        log_lr,
        window_mean_lr,
        l2_distance,
        kl,
        heldout_loglik,
        heldout_max_log_lr,
    })
}

fn l2_distance_fn(
    mix: &MixturePredictive,
    truth: &GaussianMixture,
    n_mc: usize,
    seed: u64,
) -> Result<Estimate> {
    l2_distance(|y| mix.log_density(y).exp(), truth, n_mc, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::responsibilities;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    fn cluster(mu: f64, c: f64, delta: f64, s: f64) -> NiwPosterior {
        NiwPosterior::new(dvector![mu], c, delta, dmatrix![s]).unwrap()
    }

    #[test]
    fn single_cluster_mixture_is_its_predictive() {
        let p = cluster(0.3, 4.0, 3.0, 0.5);
        let book = ClusterBook::from_clusters(vec![(p.clone(), 5, 5.0)]);
        let y = [1.1];
        let direct = crate::niw::log_predictive_density(&p, &y).unwrap().exp();
        assert!((mixture_predictive(&book, &y).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn equal_counts_give_arithmetic_mean() {
        let a = cluster(-1.0, 2.0, 2.0, 0.3);
        let b = cluster(2.0, 3.0, 4.0, 1.2);
        let book = ClusterBook::from_clusters(vec![(a.clone(), 1, 1.0), (b.clone(), 1, 1.0)]);
        let y = [0.4];
        let la = crate::niw::log_predictive_density(&a, &y).unwrap().exp();
        let lb = crate::niw::log_predictive_density(&b, &y).unwrap().exp();
        assert!((mixture_predictive(&book, &y).unwrap() - 0.5 * (la + lb)).abs() < 1e-15);
    }

    #[test]
    fn mixture_predictive_integrates_to_one() {
        let book = ClusterBook::from_clusters(vec![
            (cluster(-1.0, 2.0, 3.0, 0.3), 3, 3.0),
            (cluster(2.0, 5.0, 4.0, 0.6), 7, 7.0),
        ]);
        let h = 0.005;
        let total: f64 = (0..40_000)
            .map(|i| -100.0 + (i as f64 + 0.5) * h)
            .map(|x| mixture_predictive(&book, &[x]).unwrap() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn ratio_is_one_when_cluster_equals_prior() {
        let prior = PriorConfig::standard(2);
        let book = ClusterBook::from_clusters(vec![(prior.posterior(), 1, 1.0)]);
        for y in [[0.0, 0.0], [3.0, -1.0], [10.0, 10.0]] {
            assert!((likelihood_ratio(&book, &prior, &y).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_small_at_tight_cluster_and_large_in_tail() {
        let prior = PriorConfig::standard(1);
        let tight = cluster(0.5, 200.0, 100.0, 0.001);
        let book = ClusterBook::from_clusters(vec![(tight, 200, 200.0)]);
        assert!(likelihood_ratio(&book, &prior, &[0.5]).unwrap() < 0.05);
        assert!(likelihood_ratio(&book, &prior, &[-1.5]).unwrap() > 1.0);
    }

    #[test]
    fn innovation_probability_balance_and_limit() {
        let prior = PriorConfig::standard(1);
        let book = ClusterBook::from_clusters(vec![(prior.posterior(), 4, 4.0)]);
        // l = 1 here, so l alpha = N at alpha = 4
        assert!((innovation_probability(&book, 4.0, &prior, &[0.7]).unwrap() - 0.5).abs() < 1e-12);
        assert!(innovation_probability(&book, 1e-300, &prior, &[0.7]).unwrap() < 1e-290);
    }

    proptest! {
        #[test]
        fn innovation_probability_matches_responsibilities(
            mus in prop::collection::vec(-3.0f64..3.0, 1..5),
            ms in prop::collection::vec(1u64..50, 5),
            y in -5.0f64..5.0,
            alpha in 0.01f64..10.0,
        ) {
            let prior = PriorConfig::standard(1);
            let parts = mus.iter().zip(&ms).map(|(&mu, &m)| {
                let mut p = prior.posterior();
                for i in 0..m { p.update(&[mu + 0.1 * (i % 3) as f64]).unwrap(); }
                (p, m, m as f64)
            }).collect();
            let book = ClusterBook::from_clusters(parts);
            let q = responsibilities(&book, &[y], alpha, &prior).unwrap();
            let tau = innovation_probability(&book, alpha, &prior, &[y]).unwrap();
            prop_assert!((tau - q[q.len() - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn rising_product_ratio_telescopes_at_one() {
        for n in [2u64, 3, 10, 1000, 123_457] {
            assert!((rising_product_ratio(1.0, n).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rising_product_ratio_closed_form_at_two() {
        // prod (1 + 2/j) over j < n = n (n + 1) / 2
        for n in [10u64, 1000, 100_000] {
            let nf = n as f64;
            let closed = (nf * (nf + 1.0) / 2.0).ln() / (2.0 * nf.ln());
            assert!((rising_product_ratio(2.0, n).unwrap() - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn product_bound_examples() {
        let c = product_bound_check(1.0, 2, 100_000).unwrap();
        assert!(c.holds, "{c:?}");
        let c = product_bound_check(2.0, 10, 100_000).unwrap();
        assert!(c.holds && c.min_slack > 0.0);
        // single-term product: ln(1 + x) <= x by construction of C
        let c = product_bound_check(3.0, 5, 5).unwrap();
        assert!(c.holds);
        assert_eq!(c.margins, vec![(5, c.min_slack)]);
        assert!(product_bound_check(1.0, 1, 10).is_err());
    }

    #[test]
    fn growth_exponent_examples() {
        let constant = vec![7.0; 500];
        assert_eq!(growth_exponent_of_counts(&constant).unwrap(), 0.0);
        let n_max = 100_000;
        let log: Vec<f64> = (1..=n_max).map(|n| (n as f64).ln().max(1.0)).collect();
        assert!((growth_exponent_of_counts(&log).unwrap() - 1.0).abs() < 1e-9);
        let log2: Vec<f64> = (1..=n_max)
            .map(|n| (n as f64).ln().powi(2).max(1.0))
            .collect();
        assert!((growth_exponent_of_counts(&log2).unwrap() - 2.0).abs() < 1e-9);
        assert!(growth_exponent_of_counts(&constant[..50]).is_err());
    }

    #[test]
    fn exact_limit_state_matches_gaussian() {
        let mean = dvector![0.5, -1.0];
        let cov = dmatrix![1.0, 0.3; 0.3, 0.5];
        let post = NiwPosterior::new(mean.clone(), 1e12, 1e12, cov.clone()).unwrap();
        let dev = gaussian_limit_deviation(&post, &mean, &cov, 101).unwrap();
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn schedules() {
        let g = Schedule::Geometric { first: 10 };
        let hits: Vec<u64> = (1..200).filter(|&n| g.contains(n)).collect();
        assert_eq!(hits, vec![10, 20, 40, 80, 160]);
        let e = Schedule::Every { period: 50 };
        assert!(e.contains(100) && !e.contains(101));
    }
}
