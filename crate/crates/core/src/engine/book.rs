use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::niw::{NiwPosterior, PredictiveDensity, PriorConfig};
use crate::numeric::log_sum_exp;

/// One live cluster: its posterior, hard-assignment count `m` and the
/// running sum `w` of its responsibilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Stable identifier, assigned in creation order starting at 0.
    pub id: u64,
    pub post: NiwPosterior,
    pub m: u64,
    pub w: f64,
}

/// Symmetric per-pair accumulator stored as a ragged lower triangle; row `i`
/// holds the entries for pairs `(i, j)` with `j < i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairAccumulator {
    rows: Vec<Vec<f64>>,
}

impl PairAccumulator {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Append a member whose pair entries start at `init(j)`.
    pub fn push(&mut self, init: impl Fn(usize) -> f64) {
        let i = self.rows.len();
        self.rows.push((0..i).map(init).collect());
    }

    pub fn remove(&mut self, idx: usize) {
        self.rows.remove(idx);
        for row in self.rows.iter_mut().skip(idx) {
            row.remove(idx);
        }
    }

    fn slot(&mut self, i: usize, j: usize) -> &mut f64 {
        debug_assert_ne!(i, j);
        let (a, b) = if i > j { (i, j) } else { (j, i) };
        &mut self.rows[a][b]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i > j { (i, j) } else { (j, i) };
        self.rows[a][b]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        *self.slot(i, j) = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        *self.slot(i, j) += v;
    }
}

/// All live clusters plus the bookkeeping the prune and merge sweeps need.
///
/// `n` counts every observation ever processed. Observations of pruned
/// clusters are counted in `dropped`, so `sum(m) + dropped == n` always holds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterBook {
    pub(crate) clusters: Vec<Cluster>,
    pub(crate) n: u64,
    pub(crate) dropped: u64,
    pub(crate) next_id: u64,
    /// `sum_j |q_a^(j) - q_b^(j)|` for every live pair.
    pub(crate) dist: PairAccumulator,
}

impl ClusterBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a book from explicit clusters, e.g. for diagnostics on a
    /// constructed state. `n` is taken as the sum of counts; pair
    /// accumulators start from the disjoint-history bound `w_a + w_b`.
    pub fn from_clusters(parts: Vec<(NiwPosterior, u64, f64)>) -> Self {
        let mut book = ClusterBook::new();
        for (post, m, w) in parts {
            book.push_cluster(post, m, w, |b, j| b.clusters[j].w + w);
            book.n += m;
        }
        book
    }

    pub(crate) fn push_cluster(
        &mut self,
        post: NiwPosterior,
        m: u64,
        w: f64,
        init: impl Fn(&ClusterBook, usize) -> f64,
    ) -> usize {
        let inits: Vec<f64> = (0..self.clusters.len()).map(|j| init(self, j)).collect();
        self.dist.push(|j| inits[j]);
        self.clusters.push(Cluster {
            id: self.next_id,
            post,
            m,
            w,
        });
        self.next_id += 1;
        self.clusters.len() - 1
    }

    pub(crate) fn remove_cluster(&mut self, idx: usize) -> Cluster {
        self.dist.remove(idx);
        self.clusters.remove(idx)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Observations held by live clusters, `sum(m)`.
    pub fn assigned(&self) -> u64 {
        self.clusters.iter().map(|c| c.m).sum()
    }

    /// Observations whose cluster was pruned.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn dist_acc(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j)
    }

    /// Time-averaged l1 distance between the responsibility histories of
    /// clusters `i` and `j`: `dist_acc(i, j) / n`.
    pub fn pair_distance(&self, i: usize, j: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.dist.get(i, j) / self.n as f64
    }

    /// Prepared predictive densities of every live cluster, in order.
    pub fn predictives(&self) -> Result<Vec<PredictiveDensity>> {
        self.clusters.iter().map(|c| c.post.predictive()).collect()
    }
}

/// Dirichlet-process prior weights: `m_h / (N + alpha)` for each live
/// cluster followed by `alpha / (N + alpha)` for a new one, with
/// `N = sum(m)`. An empty book gives `[1.0]`.
pub fn predictive_prior_weights(book: &ClusterBook, alpha: f64) -> Vec<f64> {
    if book.is_empty() {
        return vec![1.0];
    }
    let denom = book.assigned() as f64 + alpha;
    book.clusters
        .iter()
        .map(|c| c.m as f64 / denom)
        .chain(std::iter::once(alpha / denom))
        .collect()
}

/// Log-domain scores behind one assignment decision.
#[derive(Debug, Clone)]
pub(crate) struct Scores {
    /// Normalized responsibilities, live clusters then the new-cluster slot.
    pub q: Vec<f64>,
    /// `ln L_0(y) - ln Ltilde(y)`; `None` for an empty book.
    pub log_lr: Option<f64>,
}

pub(crate) fn score(
    book: &ClusterBook,
    y: &[f64],
    alpha: f64,
    prior_density: &PredictiveDensity,
) -> Result<Scores> {
    if book.is_empty() {
        return Ok(Scores {
            q: vec![1.0],
            log_lr: None,
        });
    }
    let log_prior_pred = prior_density.log_density(y);
    // mixture terms ln m_h + ln L_h; the shared 1/(N + alpha) cancels
    let mut terms = Vec::with_capacity(book.len() + 1);
    for c in &book.clusters {
        terms.push((c.m as f64).ln() + c.post.predictive()?.log_density(y));
    }
    let log_mix_unnorm = log_sum_exp(&terms);
    let log_mix = log_mix_unnorm - (book.assigned() as f64).ln();
    terms.push(alpha.ln() + log_prior_pred);
    let total = log_sum_exp(&terms);
    let q = terms.iter().map(|t| (t - total).exp()).collect();
    Ok(Scores {
        q,
        log_lr: Some(log_prior_pred - log_mix),
    })
}

/// Normalized assignment probabilities for `y`: live clusters in book order,
/// then the new-cluster slot.
pub fn responsibilities(
    book: &ClusterBook,
    y: &[f64],
    alpha: f64,
    prior: &PriorConfig,
) -> Result<Vec<f64>> {
    let prior_density = prior.posterior().predictive()?;
    if let Some(c) = book.clusters.first() {
        c.post.check_dim(y)?;
    }
    Ok(score(book, y, alpha, &prior_density)?.q)
}
