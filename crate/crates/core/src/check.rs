//! Exactness checks and hinge refinement over misclassified dyads.
//!
//! A dyad is correctly reconstructed iff `a~_ij * r_ij > 0`; a zero logit
//! always counts as misclassified.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::kdtree::KdTree;
use crate::loss::hinge_loss;
use crate::model::{Embedding, ModelKind};
use crate::optim::AdamState;

pub const DEFAULT_DENSE_CAP: usize = 20_000;

/// Misclassified ordered dyads `(i, j, a~_ij)`, sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    pub dyads: Vec<(usize, usize, i8)>,
    pub total_dyads: usize,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.dyads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dyads.is_empty()
    }

    /// Exactness is defined by an empty active set.
    pub fn is_exact(&self) -> bool {
        self.dyads.is_empty()
    }

    pub fn fraction(&self) -> f64 {
        if self.total_dyads == 0 {
            0.0
        } else {
            self.dyads.len() as f64 / self.total_dyads as f64
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,label")?;
        for &(i, j, a) in &self.dyads {
            writeln!(out, "{i},{j},{a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMethod {
    Dense,
    KdTree,
    /// KD-tree for the distance model, dense otherwise.
    Auto,
}

impl std::str::FromStr for CheckMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(CheckMethod::Dense),
            "kdtree" => Ok(CheckMethod::KdTree),
            "auto" => Ok(CheckMethod::Auto),
            other => Err(Error::InvalidArgument(format!("unknown check method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseReport {
    /// `sqrt(misclassified) / sqrt(links)`; kept for logging only.
    pub frobenius_rel_error: f64,
    pub active: ActiveSet,
}

fn ensure_sizes(e: &Embedding, g: &SparseGraph) -> Result<()> {
    if e.n() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} nodes, graph has {}",
            e.n(),
            g.n()
        )));
    }
    Ok(())
}

/// Enumerates every modelled dyad.
pub fn dense_check(e: &Embedding, g: &SparseGraph, cap: usize) -> Result<DenseReport> {
    ensure_sizes(e, g)?;
    if g.n() > cap {
        return Err(Error::DenseCapExceeded { n: g.n(), cap });
    }
    let mut dyads = Vec::new();
    for i in 0..g.n() {
        let mut links = g.neighbors(i).iter().peekable();
        for j in 0..g.n() {
            let is_link = links.next_if_eq(&&j).is_some();
            if !g.is_dyad(i, j) {
                continue;
            }
            let label: i8 = if is_link { 1 } else { -1 };
            if label as f64 * e.logit(i, j) <= 0.0 {
                dyads.push((i, j, label));
            }
        }
    }
    let links = g.links().filter(|&(i, j)| g.is_dyad(i, j)).count();
    let frobenius_rel_error = match (dyads.len(), links) {
        (0, _) => 0.0,
        (_, 0) => f64::INFINITY,
        (m, l) => (m as f64).sqrt() / (l as f64).sqrt(),
    };
    Ok(DenseReport {
        frobenius_rel_error,
        active: ActiveSet {
            dyads,
            total_dyads: g.num_dyads(),
        },
    })
}

/// Radius search over the target embeddings: only dyads inside the bias
/// ball of `x_i`, or true links, can be misclassified.
pub fn kdtree_check(e: &Embedding, g: &SparseGraph) -> Result<ActiveSet> {
    ensure_sizes(e, g)?;
    if e.model != ModelKind::L2 {
        return Err(Error::WrongModel {
            expected: ModelKind::L2.to_string(),
            found: e.model.to_string(),
        });
    }
    let tree = KdTree::build(e.y.as_slice().expect("standard layout"), e.dim());
    // Widened so every point whose logit is >= 0 is a candidate; the final
    // decision below uses the same logit as the dense check.
    let radius = e.bias * (1.0 + 1e-9) + 1e-300;
    let mut dyads = Vec::new();
    let mut hits = Vec::new();
    for i in 0..g.n() {
        hits.clear();
        tree.radius_query_into(e.x_row(i), radius, &mut hits);
        hits.sort_unstable();
        let links = g.neighbors(i);
        let (mut a, mut b) = (0, 0);
        while a < hits.len() || b < links.len() {
            let j = match (hits.get(a), links.get(b)) {
                (Some(&h), Some(&l)) if h == l => {
                    a += 1;
                    b += 1;
                    h
                }
                (Some(&h), Some(&l)) if h < l => {
                    a += 1;
                    h
                }
                (Some(_), Some(&l)) => {
                    b += 1;
                    l
                }
                (Some(&h), None) => {
                    a += 1;
                    h
                }
                (None, Some(&l)) => {
                    b += 1;
                    l
                }
                (None, None) => unreachable!(),
            };
            if !g.is_dyad(i, j) {
                continue;
            }
            let label: i8 = if links.binary_search(&j).is_ok() { 1 } else { -1 };
            if label as f64 * e.logit(i, j) <= 0.0 {
                dyads.push((i, j, label));
            }
        }
    }
    Ok(ActiveSet {
        dyads,
        total_dyads: g.num_dyads(),
    })
}

pub fn check(e: &Embedding, g: &SparseGraph, method: CheckMethod, dense_cap: usize) -> Result<ActiveSet> {
    match (method, e.model) {
        (CheckMethod::KdTree, _) | (CheckMethod::Auto, ModelKind::L2) => kdtree_check(e, g),
        _ => Ok(dense_check(e, g, dense_cap)?.active),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineConfig {
    pub margin: f64,
    pub max_rounds: usize,
    pub inner_epochs: usize,
    pub lr: f64,
    pub method: CheckMethod,
    pub dense_cap: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            margin: 0.0,
            max_rounds: 200,
            inner_epochs: 50,
            lr: 0.1,
            method: CheckMethod::Auto,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub embedding: Embedding,
    /// Misclassified count of the kept embedding, before the first round
    /// and after each round. Non-increasing.
    pub misclassified: Vec<usize>,
    /// Misclassified count of the current iterate after each round.
    pub iterate_misclassified: Vec<usize>,
    pub total_dyads: usize,
    pub exact: bool,
    pub epochs: usize,
}

/// Hinge-loss refinement restricted to misclassified dyads.
///
/// Each round runs `inner_epochs` Adam steps on the hinge loss over the
/// current active set, then re-checks and replaces the active set. The
/// iterate is never rolled back; the embedding with the fewest
/// misclassified dyads seen so far is kept and returned.
pub fn refine_hinge_active_set(e: Embedding, g: &SparseGraph, cfg: &RefineConfig) -> Result<RefineOutcome> {
    let mut e = e;
    let mut active = check(&e, g, cfg.method, cfg.dense_cap)?;
    let total_dyads = active.total_dyads;
    let mut best = (active.len(), e.clone());
    let mut misclassified = vec![active.len()];
    let mut iterate_misclassified = vec![active.len()];
    let mut adam = AdamState::for_embedding(&e, cfg.lr);
    let mut epochs = 0;

    for _ in 0..cfg.max_rounds {
        if active.is_exact() {
            break;
        }
        for _ in 0..cfg.inner_epochs {
            let grads = hinge_loss(&e, &active, cfg.margin);
            if grads.value == 0.0 {
                break;
            }
            adam.step(&mut e, &grads)?;
            epochs += 1;
        }
        active = check(&e, g, cfg.method, cfg.dense_cap)?;
        if active.len() < best.0 {
            best = (active.len(), e.clone());
        }
        misclassified.push(best.0);
        iterate_misclassified.push(active.len());
    }
    Ok(RefineOutcome {
        exact: best.0 == 0,
        embedding: best.1,
        misclassified,
        iterate_misclassified,
        total_dyads,
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use crate::graph::{gen_block_graph, gen_geometric, BlockMode};
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: scan every (i, j) pair with its own label lookup.
    fn brute_active(e: &Embedding, g: &SparseGraph) -> Vec<(usize, usize, i8)> {
        let mut out = Vec::new();
        for i in 0..g.n() {
            for j in 0..g.n() {
                if i == j && !g.include_self_loops() {
                    continue;
                }
                let a: i8 = if g.links().any(|p| p == (i, j)) { 1 } else { -1 };
                if (a as f64) * e.logit(i, j) <= 0.0 {
                    out.push((i, j, a));
                }
            }
        }
        out
    }

    fn two_block_exact() -> (SparseGraph, Embedding) {
        let g = gen_block_graph(&[3, 3], BlockMode::Homophilous).unwrap();
        let pos = array![[0.0], [0.0], [0.0], [5.0], [5.0], [5.0]];
        let e = Embedding::new(ModelKind::L2, pos.clone(), pos, 1.0).unwrap();
        (g, e)
    }

    #[test]
    fn exact_embedding_has_empty_active_set() {
        let (g, e) = two_block_exact();
        let report = dense_check(&e, &g, 100).unwrap();
        assert_eq!(report.frobenius_rel_error, 0.0);
        assert!(report.active.is_exact());
        assert!(kdtree_check(&e, &g).unwrap().is_exact());
    }

    #[test]
    fn two_blocks_fit_a_one_dimensional_dot_product() {
        // block sign as the only coordinate: same block gives +1, across gives -1
        let g = gen_block_graph(&[2, 2], BlockMode::Homophilous).unwrap();
        let s = array![[1.0], [1.0], [-1.0], [-1.0]];
        let e = Embedding::new(ModelKind::Lpca, s.clone(), s, 0.0).unwrap();
        assert!(dense_check(&e, &g, 100).unwrap().active.is_exact());
    }

    #[test]
    fn empty_prediction_has_unit_error() {
        let g = gen_block_graph(&[2, 3], BlockMode::Homophilous).unwrap();
        let e = Embedding::new(ModelKind::Eig, Array2::zeros((5, 1)), Array2::zeros((5, 1)), -1.0).unwrap();
        let report = dense_check(&e, &g, 100).unwrap();
        assert_eq!(report.frobenius_rel_error, 1.0);
        assert_eq!(report.active.len(), g.num_links());
    }

    #[test]
    fn dense_cap_enforced() {
        let (g, e) = two_block_exact();
        assert!(matches!(dense_check(&e, &g, 5), Err(Error::DenseCapExceeded { .. })));
    }

    #[test]
    fn dense_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in [ModelKind::Lpca, ModelKind::Eig, ModelKind::L2] {
            let (g, _) = gen_geometric(10, 2, 0.7, rng.random(), false).unwrap();
            let e = Embedding::random(model, 10, 2, &mut rng);
            assert_eq!(dense_check(&e, &g, 100).unwrap().active.dyads, brute_active(&e, &g));
        }
    }

    #[test]
    fn boundary_link_is_flagged_by_both_checks() {
        let g = SparseGraph::from_edges(2, [(0, 1)], true, false).unwrap();
        let e = Embedding::new(ModelKind::L2, array![[0.0, 0.0], [9.0, 9.0]], array![[7.0, 7.0], [3.0, 4.0]], 5.0).unwrap();
        assert_eq!(e.logit(0, 1), 0.0);
        let dense = dense_check(&e, &g, 10).unwrap().active;
        assert!(dense.dyads.contains(&(0, 1, 1)));
        assert_eq!(kdtree_check(&e, &g).unwrap(), dense);
    }

    #[test]
    fn kdtree_requires_l2() {
        let (g, _) = two_block_exact();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = Embedding::random(ModelKind::Lpca, 6, 2, &mut rng);
        assert!(matches!(kdtree_check(&e, &g), Err(Error::WrongModel { .. })));
    }

    #[test]
    fn kdtree_matches_dense_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..40 {
            let n = rng.random_range(2..120);
            let d = rng.random_range(1..5);
            let (g, _) = gen_geometric(n, d, rng.random_range(0.2..1.2), trial, false).unwrap();
            let g = if trial % 3 == 0 { g.with_self_loops() } else { g };
            let e = Embedding::random(ModelKind::L2, n, d, &mut rng);
            assert_eq!(kdtree_check(&e, &g).unwrap(), dense_check(&e, &g, 1000).unwrap().active);
        }
    }

    #[test]
    fn ground_truth_geometric_embedding_is_exact() {
        let (g, truth) = gen_geometric(300, 3, 0.35, 5, false).unwrap();
        assert!(kdtree_check(&truth, &g).unwrap().is_exact());
    }

    #[test]
    fn predicted_links_grow_with_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut e = Embedding::random(ModelKind::L2, 30, 2, &mut rng);
        let mut previous: HashSet<(usize, usize)> = HashSet::new();
        for step in 0..20 {
            e.bias = step as f64 * 0.2;
            let predicted: HashSet<_> = (0..30)
                .flat_map(|i| (0..30).map(move |j| (i, j)))
                .filter(|&(i, j)| e.predict_link(i, j))
                .collect();
            assert!(previous.is_subset(&predicted));
            previous = predicted;
        }
    }

    #[test]
    fn refine_returns_immediately_when_exact() {
        let (g, e) = two_block_exact();
        let out = refine_hinge_active_set(e.clone(), &g, &RefineConfig::default()).unwrap();
        assert!(out.exact);
        assert_eq!(out.misclassified, vec![0]);
        assert_eq!(out.embedding, e);
    }

    #[test]
    fn refine_reports_the_kept_embedding() {
        let mut r = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..10 {
            let (g, _) = gen_geometric(40, 2, 0.5, r.random(), false).unwrap();
            let e = Embedding::random(ModelKind::L2, 40, 2, &mut r);
            let cfg = RefineConfig { max_rounds: 15, inner_epochs: 5, ..RefineConfig::default() };
            let out = refine_hinge_active_set(e, &g, &cfg).unwrap();
            assert_eq!(out.misclassified.len(), out.iterate_misclassified.len());
            assert!(out.misclassified.windows(2).all(|w| w[1] <= w[0]));
            let kept = dense_check(&out.embedding, &g, 100).unwrap().active.len();
            assert_eq!(Some(&kept), out.misclassified.last());
            assert_eq!(Some(&kept), out.iterate_misclassified.iter().min());
        }
    }

    #[test]
    fn refine_fixes_single_misclassified_dyad() {
        let (g, mut e) = two_block_exact();
        e.x[[0, 0]] = 1.5; // x_0 now misses y_1 and y_2
        let before = dense_check(&e, &g, 100).unwrap().active;
        assert!(!before.is_exact());
        let cfg = RefineConfig { lr: 0.05, ..RefineConfig::default() };
        let out = refine_hinge_active_set(e, &g, &cfg).unwrap();
        assert!(out.exact, "{:?}", out.misclassified);
        assert!(out.misclassified.len() <= 10);
        assert!(out.misclassified.windows(2).all(|w| w[1] <= w[0]));
        assert!(dense_check(&out.embedding, &g, 100).unwrap().active.is_exact());
    }
}
