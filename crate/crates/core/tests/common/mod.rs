#![allow(dead_code)]

use eed_core::loss::LossGrad;
use eed_core::{Embedding, SparseGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi style graph over ordered pairs.
pub fn random_graph(n: usize, p: f64, directed: bool, rng: &mut impl Rng) -> SparseGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    SparseGraph::from_edges(n, edges, directed, false).unwrap()
}

/// Largest blockwise relative error between the analytic gradient and
/// central differences with step `h`.
pub fn fd_rel_error(e: &Embedding, h: f64, f: impl Fn(&Embedding) -> LossGrad) -> f64 {
    let analytic = f(e);
    let value_at = |mut p: Embedding, which: usize, k: usize, delta: f64| {
        match which {
            0 => p.x.as_slice_mut().unwrap()[k] += delta,
            1 => p.y.as_slice_mut().unwrap()[k] += delta,
            _ => p.bias += delta,
        }
        f(&p).value
    };
    let numeric = |which: usize, k: usize| {
        (value_at(e.clone(), which, k, h) - value_at(e.clone(), which, k, -h)) / (2.0 * h)
    };
    let rel = |a: &[f64], b: &[f64]| {
        let diff: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let scale = a
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    };
    let nx: Vec<f64> = (0..e.x.len()).map(|k| numeric(0, k)).collect();
    let ny: Vec<f64> = (0..e.y.len()).map(|k| numeric(1, k)).collect();
    let mut worst = rel(analytic.grad_x.as_slice().unwrap(), &nx).max(rel(analytic.grad_y.as_slice().unwrap(), &ny));
    if e.model.has_bias() {
        worst = worst.max(rel(&[analytic.grad_bias], &[numeric(2, 0)]));
    } else {
        assert_eq!(analytic.grad_bias, 0.0);
    }
    worst
}
