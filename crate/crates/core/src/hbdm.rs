//! Hierarchical block distance model.
//!
//! Source and target embeddings are stacked into `Z = [X; Y]` (2N points)
//! and clustered by recursive two-way Euclidean k-means. The negative
//! Bernoulli log-likelihood is then evaluated exactly for dyads whose
//! endpoints share a leaf, and through cluster centroids for every other
//! dyad. Each centroid term is weighted by the number of dyads it stands
//! for, so the approximation tracks the full loss in magnitude.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::check::{check, refine_hinge_active_set, RefineConfig};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::loss::{backprop_logit, logit_and_dist, LossGrad};
use crate::model::{Embedding, ModelKind};
use crate::numeric::{sigmoid, softplus, sq_dist};
use crate::optim::{AdamState, PlateauScheduler, TraceRow, TrainConfig, TrainTrace};

/// Leaf capacity used when none is given: `max(8, ceil(ln N))`.
pub fn default_leaf_size(n: usize) -> usize {
    ((n.max(1) as f64).ln().ceil() as usize).max(8)
}

#[derive(Debug, Clone)]
pub struct KMeansSplit {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub centroids: [Vec<f64>; 2],
    /// `J = sum_i |z_i - mu_{k(i)}|` after each iteration.
    pub objective: Vec<f64>,
}

fn row(points: &[f64], dim: usize, k: usize) -> &[f64] {
    &points[k * dim..(k + 1) * dim]
}

pub const KMEANS_RESTARTS: usize = 16;
/// Small sets are seeded from every pair of points instead.
pub const EXHAUSTIVE_SEED_PAIRS: usize = 128;

/// Two-way k-means under the (unsquared) Euclidean norm. Centroids are
/// updated by the reweighted mean with `phi_i = |z_i - mu_k|`, which never
/// increases `J`. Seeds are drawn k-means++ style and the best of
/// [`KMEANS_RESTARTS`] runs is kept; sets with at most
/// [`EXHAUSTIVE_SEED_PAIRS`] point pairs try every pair as seeds. `idx` selects rows of the row-major
/// `points`.
pub fn euclidean_kmeans_split<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    idx: &[usize],
    rng: &mut R,
    max_iters: usize,
) -> KMeansSplit {
    assert!(idx.len() >= 2, "need at least two points to split");
    let mut best: Option<KMeansSplit> = None;
    let m = idx.len();
    let pairs: Vec<Option<(usize, usize)>> = if m * (m - 1) / 2 <= EXHAUSTIVE_SEED_PAIRS {
        (0..m)
            .flat_map(|a| (a + 1..m).map(move |b| Some((idx[a], idx[b]))))
            .collect()
    } else {
        vec![None; KMEANS_RESTARTS]
    };
    for seeds in pairs {
        let Some(run) = kmeans_run(points, dim, idx, rng, max_iters, seeds) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => run.objective.last() < b.objective.last(),
        };
        if better {
            best = Some(run);
        }
    }
    best.unwrap_or_else(|| {
        let mid = idx.len() / 2;
        let left = idx[..mid].to_vec();
        let right = idx[mid..].to_vec();
        let centroids = [mean_of(points, dim, &left), mean_of(points, dim, &right)];
        KMeansSplit {
            left,
            right,
            centroids,
            objective: Vec::new(),
        }
    })
}

/// One alternating run; `None` when every point coincides with the seed.
fn kmeans_run<R: Rng + ?Sized>(
    points: &[f64],
    dim: usize,
    idx: &[usize],
    rng: &mut R,
    max_iters: usize,
    seeds: Option<(usize, usize)>,
) -> Option<KMeansSplit> {
    let (first, second) = match seeds {
        Some(pair) => pair,
        None => {
            let first = idx[rng.random_range(0..idx.len())];
            let d2: Vec<f64> = idx
                .iter()
                .map(|&k| sq_dist(row(points, dim, k), row(points, dim, first)))
                .collect();
            let total: f64 = d2.iter().sum();
            if total == 0.0 {
                return None;
            }
            let mut u = rng.random::<f64>() * total;
            let mut second = idx[idx.len() - 1];
            for (&k, &w) in idx.iter().zip(&d2) {
                if u < w {
                    second = k;
                    break;
                }
                u -= w;
            }
            if d2[idx.iter().position(|&k| k == second).expect("member")] == 0.0 {
                second = idx[d2.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty").0];
            }
            (first, second)
        }
    };
    if sq_dist(row(points, dim, first), row(points, dim, second)) == 0.0 {
        return None;
    }
    let mut mu = [row(points, dim, first).to_vec(), row(points, dim, second).to_vec()];

    let mut assign = vec![usize::MAX; idx.len()];
    let mut dist = vec![0.0; idx.len()];
    let mut objective = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (a, &k) in idx.iter().enumerate() {
            let z = row(points, dim, k);
            let d0 = sq_dist(z, &mu[0]).sqrt();
            let d1 = sq_dist(z, &mu[1]).sqrt();
            let c = if d1 < d0 { 1 } else { 0 };
            changed |= assign[a] != c;
            assign[a] = c;
            dist[a] = d0.min(d1);
        }
        // Stop once assignments are fixed and the centroids have settled.
        if let [.., prev, last] = objective[..] {
            if !changed && prev - last <= 1e-10 * last {
                break;
            }
        }
        let mut num = [vec![0.0; dim], vec![0.0; dim]];
        let mut den = [0.0; 2];
        for (a, &k) in idx.iter().enumerate() {
            let c = assign[a];
            let w = 1.0 / dist[a].max(1e-12);
            for (s, v) in num[c].iter_mut().zip(row(points, dim, k)) {
                *s += w * v;
            }
            den[c] += w;
        }
        for c in 0..2 {
            if den[c] > 0.0 {
                mu[c] = num[c].iter().map(|s| s / den[c]).collect();
            }
        }
        let j: f64 = idx
            .iter()
            .zip(&assign)
            .map(|(&k, &c)| sq_dist(row(points, dim, k), &mu[c]).sqrt())
            .sum();
        objective.push(j);
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (a, &k) in idx.iter().enumerate() {
        if assign[a] == 0 {
            left.push(k);
        } else {
            right.push(k);
        }
    }
    if left.is_empty() || right.is_empty() {
        return None;
    }
    Some(KMeansSplit {
        left,
        right,
        centroids: mu,
        objective,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub level: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Indices into `Z`: `i < N` is `x_i`, `N + j` is `y_j`.
    pub members: Vec<usize>,
    /// Centroid at build time.
    pub centroid: Vec<f64>,
}

impl Cluster {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Binary divisive clustering of the 2N stacked embedding points.
#[derive(Debug, Clone)]
pub struct HbdmHierarchy {
    pub n: usize,
    pub dim: usize,
    pub leaf_size: usize,
    /// Cluster 0 is the root.
    pub clusters: Vec<Cluster>,
}

fn stacked(e: &Embedding) -> Vec<f64> {
    let mut z = Vec::with_capacity(2 * e.x.len());
    z.extend_from_slice(e.x.as_slice().expect("standard layout"));
    z.extend_from_slice(e.y.as_slice().expect("standard layout"));
    z
}

fn mean_of(points: &[f64], dim: usize, members: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for &k in members {
        for (s, v) in m.iter_mut().zip(row(points, dim, k)) {
            *s += v;
        }
    }
    let inv = 1.0 / members.len() as f64;
    m.iter_mut().for_each(|s| *s *= inv);
    m
}

pub const KMEANS_MAX_ITERS: usize = 100;

pub fn build_hierarchy<R: Rng + ?Sized>(e: &Embedding, leaf_size: usize, rng: &mut R) -> HbdmHierarchy {
    assert!(leaf_size >= 1, "leaf size must be positive");
    let (n, dim) = (e.n(), e.dim());
    let z = stacked(e);
    let all: Vec<usize> = (0..2 * n).collect();
    let mut clusters = vec![Cluster {
        level: 0,
        parent: None,
        children: Vec::new(),
        centroid: mean_of(&z, dim, &all),
        members: all,
    }];
    let mut stack = vec![0];
    while let Some(c) = stack.pop() {
        if clusters[c].members.len() <= leaf_size {
            continue;
        }
        let split = euclidean_kmeans_split(&z, dim, &clusters[c].members, rng, KMEANS_MAX_ITERS);
        let level = clusters[c].level + 1;
        for members in [split.left, split.right] {
            let id = clusters.len();
            clusters.push(Cluster {
                level,
                parent: Some(c),
                children: Vec::new(),
                centroid: mean_of(&z, dim, &members),
                members,
            });
            clusters[c].children.push(id);
            stack.push(id);
        }
    }
    HbdmHierarchy {
        n,
        dim,
        leaf_size,
        clusters,
    }
}

impl HbdmHierarchy {
    pub fn depth(&self) -> usize {
        self.clusters.iter().map(|c| c.level).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.is_leaf())
    }

    /// Clusters that partition `Z` at `level`: the clusters on that level
    /// plus leaves that stopped above it.
    pub fn partition_at(&self, level: usize) -> Vec<usize> {
        (0..self.clusters.len())
            .filter(|&c| {
                let cl = &self.clusters[c];
                cl.level == level || (cl.level < level && cl.is_leaf())
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "level,cluster,parent,members")?;
        for d in 0..self.dim {
            write!(out, ",c{d}")?;
        }
        writeln!(out)?;
        for (id, c) in self.clusters.iter().enumerate() {
            let parent = c.parent.map(|p| p.to_string()).unwrap_or_default();
            write!(out, "{},{},{},{}", c.level, id, parent, c.members.len())?;
            for v in &c.centroid {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Negative HBDM log-likelihood:
///
/// `-sum_{links} r_ij + sum_{leaves} sum_{i,j in leaf} softplus(r_ij)
///  + sum_{siblings k != k'} c_kk' softplus(beta - |mu_k - mu_k'|)`
///
/// where `c_kk'` counts the dyads with `x_i` in `k` and `y_j` in `k'`, and
/// centroids are the current means of their members.
pub fn hbdm_loss(e: &Embedding, g: &SparseGraph, h: &HbdmHierarchy) -> Result<LossGrad> {
    if e.model != ModelKind::L2 {
        return Err(Error::WrongModel {
            expected: ModelKind::L2.to_string(),
            found: e.model.to_string(),
        });
    }
    if e.n() != g.n() || h.n != e.n() || h.dim != e.dim() {
        return Err(Error::DimensionMismatch(
            "embedding, graph and hierarchy sizes differ".into(),
        ));
    }
    let (n, dim) = (e.n(), e.dim());
    let mut out = LossGrad::zeros(n, dim);
    let mut value = 0.0;
    let mut gb = 0.0;
    {
        let gx = out.grad_x.as_slice_mut().expect("standard layout");
        let gy = out.grad_y.as_slice_mut().expect("standard layout");

        for (i, j) in g.links() {
            if g.is_dyad(i, j) {
                let (r, dist) = logit_and_dist(e, i, j);
                value -= r;
                backprop_logit(e, i, j, dist, -1.0, gx, gy, &mut gb);
            }
        }

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for leaf in h.leaves() {
            xs.clear();
            ys.clear();
            for &m in &leaf.members {
                if m < n {
                    xs.push(m);
                } else {
                    ys.push(m - n);
                }
            }
            for &i in &xs {
                for &j in &ys {
                    if g.is_dyad(i, j) {
                        let (r, dist) = logit_and_dist(e, i, j);
                        value += softplus(r);
                        backprop_logit(e, i, j, dist, sigmoid(r), gx, gy, &mut gb);
                    }
                }
            }
        }
    }

    // Centroid terms between siblings.
    let z = stacked(e);
    let mut gz = vec![0.0; z.len()];
    for parent in h.clusters.iter().filter(|c| !c.is_leaf()) {
        let kids: Vec<&Cluster> = parent.children.iter().map(|&c| &h.clusters[c]).collect();
        let mus: Vec<Vec<f64>> = kids.iter().map(|c| mean_of(&z, dim, &c.members)).collect();
        let counts: Vec<(usize, usize)> = kids
            .iter()
            .map(|c| {
                let nx = c.members.iter().filter(|&&m| m < n).count();
                (nx, c.members.len() - nx)
            })
            .collect();
        for a in 0..kids.len() {
            for b in 0..kids.len() {
                if a == b {
                    continue;
                }
                let mut pairs = counts[a].0 * counts[b].1;
                if !g.include_self_loops() {
                    pairs -= same_node_pairs(&kids[a].members, &kids[b].members, n);
                }
                if pairs == 0 {
                    continue;
                }
                let c = pairs as f64;
                let dist = sq_dist(&mus[a], &mus[b]).sqrt();
                let r = e.bias - dist;
                value += c * softplus(r);
                let dldr = c * sigmoid(r);
                gb += dldr;
                if dist > 0.0 {
                    // d r / d mu_a = -(mu_a - mu_b) / dist
                    let scale = dldr / dist;
                    let (la, lb) = (kids[a].members.len() as f64, kids[b].members.len() as f64);
                    for d in 0..dim {
                        let diff = mus[a][d] - mus[b][d];
                        let ga = -scale * diff / la;
                        let gbb = scale * diff / lb;
                        for &m in &kids[a].members {
                            gz[m * dim + d] += ga;
                        }
                        for &m in &kids[b].members {
                            gz[m * dim + d] += gbb;
                        }
                    }
                }
            }
        }
    }
    let (gzx, gzy) = gz.split_at(n * dim);
    out.grad_x
        .as_slice_mut()
        .expect("standard layout")
        .iter_mut()
        .zip(gzx)
        .for_each(|(g, v)| *g += v);
    out.grad_y
        .as_slice_mut()
        .expect("standard layout")
        .iter_mut()
        .zip(gzy)
        .for_each(|(g, v)| *g += v);
    out.value = value;
    out.grad_bias = gb;
    Ok(out)
}

/// Number of nodes `i` with `x_i` in `a` and `y_i` in `b`.
fn same_node_pairs(a: &[usize], b: &[usize], n: usize) -> usize {
    let mut xa: Vec<usize> = a.iter().copied().filter(|&m| m < n).collect();
    xa.sort_unstable();
    b.iter()
        .filter(|&&m| m >= n && xa.binary_search(&(m - n)).is_ok())
        .count()
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoStageConfig {
    /// Stage-one budget and schedule.
    #[serde(skip)]
    pub train: TrainConfig,
    /// Epochs between hierarchy rebuilds.
    pub refresh_every: usize,
    /// Leaf capacity; `None` uses [`default_leaf_size`].
    pub leaf_size: Option<usize>,
    pub refine: RefineConfig,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            refresh_every: 25,
            leaf_size: None,
            refine: RefineConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub embedding: Embedding,
    pub stage1: TrainTrace,
    /// Misclassified count before stage two and after each of its rounds.
    pub stage2_misclassified: Vec<usize>,
    pub total_dyads: usize,
    pub exact: bool,
    pub epochs: usize,
}

impl TwoStageOutcome {
    /// Misclassified count of the returned embedding.
    pub fn misclassified(&self) -> usize {
        *self.stage2_misclassified.last().expect("at least one check")
    }
}

/// Stage one: Adam on the HBDM loss, rebuilding the hierarchy every
/// `refresh_every` epochs. Stage two: hinge refinement of the remaining
/// misclassified dyads.
pub fn two_stage_fit<R: Rng + ?Sized>(
    e: Embedding,
    g: &SparseGraph,
    cfg: &TwoStageConfig,
    rng: &mut R,
) -> Result<TwoStageOutcome> {
    cfg.train.validate()?;
    if e.model != ModelKind::L2 {
        return Err(Error::WrongModel {
            expected: ModelKind::L2.to_string(),
            found: e.model.to_string(),
        });
    }
    let leaf_size = cfg.leaf_size.unwrap_or_else(|| default_leaf_size(g.n()));
    let mut kmeans_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let mut e = e;
    let mut trace = TrainTrace::default();
    let mut sched = PlateauScheduler::new(cfg.train.lr0, cfg.train.patience);
    let mut adam = AdamState::for_embedding(&e, cfg.train.lr0);
    let check_now = |e: &Embedding| check(e, g, cfg.train.check_method, cfg.train.dense_cap);

    let mut misclassified = check_now(&e)?.len();
    trace.rows.push(TraceRow {
        epoch: 0,
        loss: f64::NAN,
        lr: cfg.train.lr0,
        misclassified: Some(misclassified),
    });
    let mut h = build_hierarchy(&e, leaf_size, &mut kmeans_rng);
    let mut epochs = 0;
    while misclassified > 0 && epochs < cfg.train.epochs {
        if epochs > 0 && epochs % cfg.refresh_every.max(1) == 0 {
            h = build_hierarchy(&e, leaf_size, &mut kmeans_rng);
        }
        let grads = hbdm_loss(&e, g, &h)?;
        adam.lr = sched.lr;
        adam.step(&mut e, &grads)?;
        epochs += 1;
        let lr = sched.observe(grads.value);
        let stalled = lr < cfg.train.min_lr;
        let mut row = TraceRow {
            epoch: epochs,
            loss: grads.value,
            lr: adam.lr,
            misclassified: None,
        };
        if epochs % cfg.train.check_every == 0 || epochs == cfg.train.epochs || stalled {
            misclassified = check_now(&e)?.len();
            row.misclassified = Some(misclassified);
        }
        trace.rows.push(row);
        if stalled {
            break;
        }
    }

    let refined = refine_hinge_active_set(e, g, &cfg.refine)?;
    Ok(TwoStageOutcome {
        embedding: refined.embedding,
        stage1: trace,
        stage2_misclassified: refined.misclassified,
        total_dyads: refined.total_dyads,
        exact: refined.exact,
        epochs: epochs + refined.epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::dense_check;
    use crate::graph::{gen_block_graph, gen_geometric, BlockMode};
    use crate::loss::logistic_loss_full;
    use ndarray::Array2;
    use rand_distr::StandardNormal;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn j_of(points: &[f64], dim: usize, left: &[usize], right: &[usize]) -> f64 {
        let cost = |set: &[usize]| -> f64 {
            if set.is_empty() {
                return 0.0;
            }
            // geometric median by plain Weiszfeld, run to convergence
            let mut mu = mean_of(points, dim, set);
            for _ in 0..2000 {
                let mut num = vec![0.0; dim];
                let mut den = 0.0;
                for &k in set {
                    let w = 1.0 / sq_dist(row(points, dim, k), &mu).sqrt().max(1e-12);
                    for (s, v) in num.iter_mut().zip(row(points, dim, k)) {
                        *s += w * v;
                    }
                    den += w;
                }
                mu = num.iter().map(|s| s / den).collect();
            }
            set.iter().map(|&k| sq_dist(row(points, dim, k), &mu).sqrt()).sum()
        };
        cost(left) + cost(right)
    }

    #[test]
    fn leaf_size_rule() {
        assert_eq!(default_leaf_size(10), 8);
        assert_eq!(default_leaf_size(2708), 8);
        assert_eq!(default_leaf_size(100_000), 12);
    }

    #[test]
    fn separated_clouds_are_recovered() {
        let pts = [0.0, 0.1, 0.2, -0.1, 10.0, 10.2, 9.9, 10.1];
        let idx: Vec<usize> = (0..8).collect();
        let split = euclidean_kmeans_split(&pts, 1, &idx, &mut rng(1), 50);
        let mut sides = [split.left.clone(), split.right.clone()];
        sides.sort();
        assert_eq!(sides, [vec![0, 1, 2, 3], vec![4, 5, 6, 7]]);
    }

    #[test]
    fn identical_points_split_by_halves() {
        let pts = [1.0; 10];
        let idx: Vec<usize> = (0..5).collect();
        let split = euclidean_kmeans_split(&pts, 2, &idx, &mut rng(0), 50);
        assert_eq!(split.left, vec![0, 1]);
        assert_eq!(split.right, vec![2, 3, 4]);
    }

    #[test]
    fn objective_never_increases() {
        let mut r = rng(5);
        for _ in 0..20 {
            let pts: Vec<f64> = (0..200).map(|_| r.sample(StandardNormal)).collect();
            let idx: Vec<usize> = (0..100).collect();
            let split = euclidean_kmeans_split(&pts, 2, &idx, &mut r, 100);
            for w in split.objective.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn near_exhaustive_best_bipartition() {
        let mut r = rng(12);
        for _ in 0..10 {
            let pts: Vec<f64> = (0..24).map(|_| r.sample(StandardNormal)).collect();
            let idx: Vec<usize> = (0..12).collect();
            let split = euclidean_kmeans_split(&pts, 2, &idx, &mut r, 100);
            let ours = j_of(&pts, 2, &split.left, &split.right);
            let mut best = f64::INFINITY;
            // point 0 fixed on the left: 2^11 splits
            for mask in 0u32..(1 << 11) {
                let mut left = vec![0];
                let mut right = Vec::new();
                for k in 1..12 {
                    if mask & (1 << (k - 1)) != 0 {
                        left.push(k);
                    } else {
                        right.push(k);
                    }
                }
                if right.is_empty() {
                    continue;
                }
                best = best.min(j_of(&pts, 2, &left, &right));
            }
            assert!(ours <= 1.05 * best, "{ours} vs {best}");
        }
    }

    fn clustered_embedding(centers: &[(f64, f64)], per: usize, seed: u64) -> Embedding {
        // every cluster gets per/2 source and per/2 target points
        let mut r = rng(seed);
        let n = centers.len() * per / 2;
        let mut x = Array2::zeros((n, 2));
        let mut y = Array2::zeros((n, 2));
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for k in 0..per / 2 {
                let i = c * per / 2 + k;
                for (m, mat) in [&mut x, &mut y].into_iter().enumerate() {
                    let _ = m;
                    mat[[i, 0]] = cx + 0.1 * r.sample::<f64, _>(StandardNormal);
                    mat[[i, 1]] = cy + 0.1 * r.sample::<f64, _>(StandardNormal);
                }
            }
        }
        Embedding::new(ModelKind::L2, x, y, 0.5).unwrap()
    }

    #[test]
    fn small_input_is_single_leaf() {
        let e = clustered_embedding(&[(0.0, 0.0)], 8, 1);
        let h = build_hierarchy(&e, 8, &mut rng(0));
        assert_eq!(h.clusters.len(), 1);
        assert!(h.clusters[0].is_leaf());
    }

    #[test]
    fn leaves_follow_separated_clusters() {
        let centers = [(0.0, 0.0), (20.0, 3.0), (5.0, 40.0), (50.0, 45.0)];
        let e = clustered_embedding(&centers, 10, 2);
        let h = build_hierarchy(&e, 12, &mut rng(3));
        let n = e.n();
        let cluster_of = |m: usize| (if m < n { m } else { m - n }) / 5;
        let leaves: Vec<&Cluster> = h.leaves().collect();
        assert_eq!(leaves.len(), 4);
        for leaf in leaves {
            assert_eq!(leaf.members.len(), 10);
            let c = cluster_of(leaf.members[0]);
            assert!(leaf.members.iter().all(|&m| cluster_of(m) == c));
        }
    }

    #[test]
    fn hierarchy_partitions_every_level() {
        let mut r = rng(4);
        let e = Embedding::random(ModelKind::L2, 1000, 3, &mut r);
        let leaf = default_leaf_size(1000);
        let h = build_hierarchy(&e, leaf, &mut r);
        for level in 0..=h.depth() {
            let mut seen = vec![0u8; 2000];
            for c in h.partition_at(level) {
                for &m in &h.clusters[c].members {
                    seen[m] += 1;
                }
            }
            assert!(seen.iter().all(|&s| s == 1), "level {level}");
        }
        for c in &h.clusters {
            if !c.is_leaf() {
                let mut kids: Vec<usize> = c.children.iter().flat_map(|&k| h.clusters[k].members.clone()).collect();
                kids.sort_unstable();
                let mut own = c.members.clone();
                own.sort_unstable();
                assert_eq!(kids, own);
            }
        }
        let leaves = h.leaves().count();
        assert!(h.leaves().all(|c| c.members.len() <= leaf));
        assert!(leaves >= 2000 / leaf && leaves <= 4 * 2000 / leaf, "{leaves} leaves");
    }

    #[test]
    fn single_leaf_equals_full_loss() {
        let (g, _) = gen_geometric(50, 2, 0.5, 7, false).unwrap();
        let mut r = rng(8);
        let e = Embedding::random(ModelKind::L2, 50, 2, &mut r);
        let h = build_hierarchy(&e, 100, &mut r);
        assert_eq!(h.clusters.len(), 1);
        let approx = hbdm_loss(&e, &g, &h).unwrap();
        let full = logistic_loss_full(&e, &g);
        assert!((approx.value - full.value).abs() <= 1e-9 * full.value);
        for (a, b) in approx.grad_x.iter().zip(full.grad_x.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((approx.grad_bias - full.grad_bias).abs() < 1e-9 * full.grad_bias.abs().max(1.0));
    }

    #[test]
    fn two_leaf_centroid_term_by_hand() {
        // x_0 = y_0 = (0, 0), x_1 = y_1 = (3, 4); no links.
        let x = ndarray::array![[0.0, 0.0], [3.0, 4.0]];
        let e = Embedding::new(ModelKind::L2, x.clone(), x, 1.0).unwrap();
        let g = SparseGraph::from_edges(2, std::iter::empty(), false, false).unwrap();
        let h = build_hierarchy(&e, 2, &mut rng(0));
        assert_eq!(h.leaves().count(), 2);
        // leaves {x_0, y_0} and {x_1, y_1}: no within-leaf dyads (i == j);
        // one dyad each way across, at centroid distance 5.
        let want = 2.0 * (1.0f64 + (1.0f64 - 5.0).exp()).ln();
        let got = hbdm_loss(&e, &g, &h).unwrap().value;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn refreshed_hierarchy_tracks_full_loss() {
        let (g, truth) = gen_geometric(400, 2, 0.3, 3, false).unwrap();
        let h = build_hierarchy(&truth, default_leaf_size(400), &mut rng(1));
        let approx = hbdm_loss(&truth, &g, &h).unwrap().value;
        let full = logistic_loss_full(&truth, &g).value;
        assert!((approx - full).abs() / full <= 0.10, "{approx} vs {full}");
    }

    #[test]
    fn requires_distance_model() {
        let g = gen_block_graph(&[2, 2], BlockMode::Homophilous).unwrap();
        let e = Embedding::random(ModelKind::Lpca, 4, 1, &mut rng(0));
        let h = build_hierarchy(&Embedding::random(ModelKind::L2, 4, 1, &mut rng(0)), 8, &mut rng(0));
        assert!(hbdm_loss(&e, &g, &h).is_err());
    }

    #[test]
    fn two_stage_is_exact_on_two_blocks() {
        // D = 1 has local minima; one of a few seeds must succeed.
        let g = gen_block_graph(&[10, 10], BlockMode::Homophilous).unwrap();
        let cfg = TwoStageConfig {
            train: TrainConfig { epochs: 1000, check_every: 25, ..TrainConfig::default() },
            ..TwoStageConfig::default()
        };
        let mut exact = 0;
        for seed in 0..4 {
            let mut r = rng(seed);
            let e = Embedding::random(ModelKind::L2, 20, 1, &mut r);
            let out = two_stage_fit(e, &g, &cfg, &mut r).unwrap();
            assert!(out.stage2_misclassified.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(out.exact, dense_check(&out.embedding, &g, 100).unwrap().active.is_exact());
            exact += out.exact as usize;
        }
        assert!(exact >= 1);
    }
}
