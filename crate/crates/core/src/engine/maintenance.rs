//! Prune and merge sweeps over a [`ClusterBook`].

use super::book::ClusterBook;
use super::concentration::ConcentrationState;

/// Remove every cluster whose relative weight `w_h / sum(w)` is below
/// `eps_r`, all judged against the weights before the sweep. The heaviest
/// cluster always survives. Returns the number removed.
///
/// Observations of removed clusters are not reassigned; their count moves to
/// [`ClusterBook::dropped`] and `n` is left alone.
pub fn prune(book: &mut ClusterBook, conc: &mut ConcentrationState, eps_r: f64) -> usize {
    if eps_r <= 0.0 || book.len() <= 1 {
        return 0;
    }
    let total: f64 = book.clusters.iter().map(|c| c.w).sum();
    if total <= 0.0 {
        return 0;
    }
    let mut doomed: Vec<usize> = (0..book.len())
        .filter(|&h| book.clusters[h].w / total < eps_r)
        .collect();
    if doomed.len() == book.len() {
        let keep = (0..book.len())
            .max_by(|&a, &b| {
                book.clusters[a]
                    .w
                    .total_cmp(&book.clusters[b].w)
                    .then(b.cmp(&a))
            })
            .expect("nonempty");
        doomed.retain(|&h| h != keep);
    }
    for &h in doomed.iter().rev() {
        let gone = book.remove_cluster(h);
        book.dropped += gone.m;
    }
    conc.k -= doomed.len();
    debug_assert_eq!(conc.k, book.len());
    doomed.len()
}

/// Merge pairs whose time-averaged responsibility distance
/// [`ClusterBook::pair_distance`] is below `eps_d`.
///
/// Candidates are taken greedily in ascending distance (ties by index) and
/// each cluster joins at most one merge per sweep. The lower index survives
/// and absorbs the other with `a = c_1 / (c_1 + c_2)`:
/// `mu = a mu_1 + (1 - a) mu_2`, `sigma = a sigma_1 + (1 - a) sigma_2`, and
/// `c`, `delta`, `m`, `w` add up. Returns the number of merges.
pub fn merge(book: &mut ClusterBook, conc: &mut ConcentrationState, eps_d: f64) -> usize {
    let k = book.len();
    if k < 2 || book.n == 0 {
        return 0;
    }
    let mut candidates: Vec<(f64, usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .map(|(i, j)| (book.pair_distance(i, j), i, j))
        .filter(|&(d, _, _)| d < eps_d)
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut used = vec![false; k];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return 0;
    }

    let mut survivors = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let other = book.clusters[j].clone();
        let keep = &mut book.clusters[i];
        let a = keep.post.c / (keep.post.c + other.post.c);
        keep.post.mu = &keep.post.mu * a + &other.post.mu * (1.0 - a);
        keep.post.sigma = &keep.post.sigma * a + &other.post.sigma * (1.0 - a);
        keep.post.c += other.post.c;
        keep.post.delta += other.post.delta;
        keep.m += other.m;
        keep.w += other.w;
        survivors.push(keep.id);
    }
    let mut absorbed: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
    absorbed.sort_unstable();
    for &j in absorbed.iter().rev() {
        book.remove_cluster(j);
    }

    // The merged history is not comparable to the old ones; restart each
    // survivor's pairs from the disjoint-history bound w_a + w_b, which keeps
    // d_q an upper bound on the true distance.
    for id in survivors {
        let s = book
            .clusters
            .iter()
            .position(|c| c.id == id)
            .expect("survivor is live");
        for o in 0..book.len() {
            if o != s {
                let v = book.clusters[s].w + book.clusters[o].w;
                book.dist.set(s, o, v);
            }
        }
    }
    conc.k -= pairs.len();
    debug_assert_eq!(conc.k, book.len());
    pairs.len()
}
