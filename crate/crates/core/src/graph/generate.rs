use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::SparseGraph;
use crate::error::{Error, Result};
use crate::model::{Embedding, ModelKind};
use crate::numeric::{sigmoid, sq_dist};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMode {
    /// Nodes link iff they share a block.
    Homophilous,
    /// Nodes link iff they sit in different blocks.
    Heterophilous,
}

/// Undirected block graph without self-loops; blocks are laid out
/// consecutively in node order.
pub fn gen_block_graph(block_sizes: &[usize], mode: BlockMode) -> Result<SparseGraph> {
    if block_sizes.is_empty() {
        return Err(Error::InvalidArgument("at least one block is required".into()));
    }
    if block_sizes.contains(&0) {
        return Err(Error::InvalidArgument("block sizes must be positive".into()));
    }
    let block_of: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = block_of.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let same = block_of[i] == block_of[j];
            if same == (mode == BlockMode::Homophilous) {
                edges.push((i, j));
            }
        }
    }
    SparseGraph::from_edges(n, edges, false, false)
}

/// Random geometric graph on points drawn uniformly from the unit `d`-ball.
///
/// Deterministic mode links `i != j` iff `|p_i - p_j| <= bias`; stochastic
/// mode links each unordered pair with probability `sigmoid(bias - |p_i - p_j|)`.
/// The returned embedding is the generating configuration (`X = Y = points`).
pub fn gen_geometric(
    n: usize,
    d: usize,
    bias: f64,
    seed: u64,
    stochastic: bool,
) -> Result<(SparseGraph, Embedding)> {
    if n < 2 || d < 1 {
        return Err(Error::InvalidArgument("geometric graphs need n >= 2 and d >= 1".into()));
    }
    if !(bias > 0.0 && bias.is_finite()) {
        return Err(Error::InvalidArgument(format!("bias must be positive, got {bias}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Array2::<f64>::zeros((n, d));
    for mut row in points.rows_mut() {
        let direction: Vec<f64> = loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|a| a / norm).collect();
            }
        };
        let radius = rng.random::<f64>().powf(1.0 / d as f64);
        for (dst, a) in row.iter_mut().zip(direction) {
            *dst = radius * a;
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        let pi = points.row(i);
        let pi = pi.as_slice().expect("standard layout");
        for j in (i + 1)..n {
            let pj = points.row(j);
            let dist = sq_dist(pi, pj.as_slice().expect("standard layout")).sqrt();
            let linked = if stochastic {
                rng.random::<f64>() < sigmoid(bias - dist)
            } else {
                dist <= bias
            };
            if linked {
                edges.push((i, j));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, edges, false, false)?;
    let truth = Embedding::new(ModelKind::L2, points.clone(), points, bias)?;
    Ok((graph, truth))
}
