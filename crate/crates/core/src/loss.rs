//! Objectives over dyads and their analytic gradients.
//!
//! Every loss is a sum of per-dyad terms `f(r_ij)`; the chain rule through
//! the model logit is shared by all of them. For the distance model at
//! coincident points the distance gradient is taken to be zero.

use ndarray::Array2;
use rand::Rng;

use crate::check::ActiveSet;
use crate::graph::SparseGraph;
use crate::model::{Embedding, ModelKind};
use crate::numeric::{dot, softplus_sigmoid};

/// Loss value with gradients for every parameter block. Blocks the model
/// does not have (the bias of LPCA) stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad_x: Array2<f64>,
    pub grad_y: Array2<f64>,
    pub grad_bias: f64,
}

impl LossGrad {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            value: 0.0,
            grad_x: Array2::zeros((n, d)),
            grad_y: Array2::zeros((n, d)),
            grad_bias: 0.0,
        }
    }

    fn for_embedding(e: &Embedding) -> Self {
        Self::zeros(e.n(), e.dim())
    }
}

/// One weighted dyad with shifted label `2a - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadSample {
    pub i: usize,
    pub j: usize,
    pub label: i8,
    pub weight: f64,
}

/// Logit of `(i, j)` and, for the distance model, `|x_i - y_j|`.
#[inline]
pub(crate) fn logit_and_dist(e: &Embedding, i: usize, j: usize) -> (f64, f64) {
    let (xi, yj) = (e.x_row(i), e.y_row(j));
    match e.model {
        ModelKind::Lpca => (dot(xi, yj), 0.0),
        ModelKind::Eig => (e.bias + dot(xi, yj), 0.0),
        ModelKind::L2 => {
            let dist = crate::numeric::sq_dist(xi, yj).sqrt();
            (e.bias - dist, dist)
        }
    }
}

/// Adds `dldr * d r_ij / d theta` into the gradient buffers.
#[inline]
pub(crate) fn backprop_logit(
    e: &Embedding,
    i: usize,
    j: usize,
    dist: f64,
    dldr: f64,
    gx: &mut [f64],
    gy: &mut [f64],
    gb: &mut f64,
) {
    let d = e.dim();
    let (xi, yj) = (e.x_row(i), e.y_row(j));
    let gxi = &mut gx[i * d..(i + 1) * d];
    match e.model {
        ModelKind::Lpca | ModelKind::Eig => {
            for (g, v) in gxi.iter_mut().zip(yj) {
                *g += dldr * v;
            }
            let gyj = &mut gy[j * d..(j + 1) * d];
            for (g, v) in gyj.iter_mut().zip(xi) {
                *g += dldr * v;
            }
            if e.model == ModelKind::Eig {
                *gb += dldr;
            }
        }
        ModelKind::L2 => {
            *gb += dldr;
            if dist > 0.0 {
                let scale = dldr / dist;
                for (g, (a, b)) in gxi.iter_mut().zip(xi.iter().zip(yj)) {
                    *g -= scale * (a - b);
                }
                let gyj = &mut gy[j * d..(j + 1) * d];
                for (g, (a, b)) in gyj.iter_mut().zip(xi.iter().zip(yj)) {
                    *g += scale * (a - b);
                }
            }
        }
    }
}

struct Accumulator<'a> {
    e: &'a Embedding,
    out: LossGrad,
}

impl<'a> Accumulator<'a> {
    fn new(e: &'a Embedding) -> Self {
        Self {
            e,
            out: LossGrad::for_embedding(e),
        }
    }

    /// Adds `weight * -log sigmoid(label * r_ij)`.
    #[inline]
    fn logistic(&mut self, i: usize, j: usize, label: f64, weight: f64) {
        let (r, dist) = logit_and_dist(self.e, i, j);
        let (sp, sg) = softplus_sigmoid(-label * r);
        self.out.value += weight * sp;
        let dldr = -weight * label * sg;
        self.backprop(i, j, dist, dldr);
    }

    #[inline]
    fn backprop(&mut self, i: usize, j: usize, dist: f64, dldr: f64) {
        let gx = self.out.grad_x.as_slice_mut().expect("standard layout");
        let gy = self.out.grad_y.as_slice_mut().expect("standard layout");
        backprop_logit(self.e, i, j, dist, dldr, gx, gy, &mut self.out.grad_bias);
    }

    fn finish(self) -> LossGrad {
        self.out
    }
}

/// `sum_{dyads} -log sigmoid(a~_ij r_ij)` over every modelled ordered dyad.
pub fn logistic_loss_full(e: &Embedding, g: &SparseGraph) -> LossGrad {
    assert_eq!(e.n(), g.n(), "embedding and graph sizes differ");
    let (n, d) = (e.n(), e.dim());
    let mut out = LossGrad::for_embedding(e);
    let xs = e.x.as_slice().expect("standard layout");
    let ys = e.y.as_slice().expect("standard layout");
    let gx = out.grad_x.as_slice_mut().expect("standard layout");
    let gy = out.grad_y.as_slice_mut().expect("standard layout");
    let (mut value, mut gb) = (0.0, 0.0);
    let mut gxi = vec![0.0; d];
    for i in 0..n {
        let xi = &xs[i * d..(i + 1) * d];
        gxi.fill(0.0);
        let mut links = g.neighbors(i).iter().peekable();
        for j in 0..n {
            let is_link = links.next_if_eq(&&j).is_some();
            if !g.is_dyad(i, j) {
                continue;
            }
            let label = if is_link { 1.0 } else { -1.0 };
            let yj = &ys[j * d..(j + 1) * d];
            let gyj = &mut gy[j * d..(j + 1) * d];
            match e.model {
                ModelKind::L2 => {
                    let dist = crate::numeric::sq_dist(xi, yj).sqrt();
                    let (sp, sg) = softplus_sigmoid(-label * (e.bias - dist));
                    value += sp;
                    let dldr = -label * sg;
                    gb += dldr;
                    if dist > 0.0 {
                        let scale = dldr / dist;
                        for k in 0..d {
                            let diff = xi[k] - yj[k];
                            gxi[k] -= scale * diff;
                            gyj[k] += scale * diff;
                        }
                    }
                }
                ModelKind::Lpca | ModelKind::Eig => {
                    let (sp, sg) = softplus_sigmoid(-label * (e.bias + dot(xi, yj)));
                    value += sp;
                    let dldr = -label * sg;
                    gb += dldr;
                    for k in 0..d {
                        gxi[k] += dldr * yj[k];
                        gyj[k] += dldr * xi[k];
                    }
                }
            }
        }
        for (g, v) in gx[i * d..(i + 1) * d].iter_mut().zip(&gxi) {
            *g += v;
        }
    }
    out.value = value;
    out.grad_bias = if e.model.has_bias() { gb } else { 0.0 };
    out
}

/// `sum_{S} max(0, margin - a~_ij r_ij)`; the subgradient at the kink is zero.
pub fn hinge_loss(e: &Embedding, active: &ActiveSet, margin: f64) -> LossGrad {
    assert!(margin >= 0.0, "hinge margin must be non-negative");
    let mut acc = Accumulator::new(e);
    for &(i, j, label) in &active.dyads {
        let (r, dist) = logit_and_dist(e, i, j);
        let label = label as f64;
        let slack = margin - label * r;
        if slack > 0.0 {
            acc.out.value += slack;
            acc.backprop(i, j, dist, -label);
        }
    }
    acc.finish()
}

/// Logistic loss restricted to the subgraph induced by `batch`.
pub fn rn_loss(e: &Embedding, g: &SparseGraph, batch: &[usize]) -> LossGrad {
    assert_eq!(e.n(), g.n(), "embedding and graph sizes differ");
    let mut nodes = batch.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let mut acc = Accumulator::new(e);
    for &i in &nodes {
        for &j in &nodes {
            if g.is_dyad(i, j) {
                acc.logistic(i, j, g.label(i, j) as f64, 1.0);
            }
        }
    }
    acc.finish()
}

/// Case-control sample: every link of node `i` with weight 1, plus
/// `k * deg(i)` non-links of `i` drawn uniformly with replacement, each
/// weighted by `(N - deg(i)) / (k * deg(i))`.
pub fn cc_sample<R: Rng + ?Sized>(g: &SparseGraph, k: usize, rng: &mut R) -> Vec<DyadSample> {
    assert!(k >= 1, "case-control ratio must be positive");
    let n = g.n();
    let mut out = Vec::with_capacity(g.num_links() * (k + 1));
    let mut candidates = Vec::new();
    for i in 0..n {
        let links = g.neighbors(i);
        let deg = links.len();
        out.extend(links.iter().map(|&j| DyadSample { i, j, label: 1, weight: 1.0 }));
        let row_dyads = if g.include_self_loops() { n } else { n - 1 };
        let available = row_dyads - links.iter().filter(|&&j| g.is_dyad(i, j)).count();
        if deg == 0 || available == 0 {
            continue;
        }
        let draws = k * deg;
        let weight = (n - deg) as f64 / draws as f64;
        let is_nonlink = |j: usize| g.is_dyad(i, j) && links.binary_search(&j).is_err();
        if 4 * available >= n {
            let mut drawn = 0;
            while drawn < draws {
                let j = rng.random_range(0..n);
                if is_nonlink(j) {
                    out.push(DyadSample { i, j, label: -1, weight });
                    drawn += 1;
                }
            }
        } else {
            candidates.clear();
            candidates.extend((0..n).filter(|&j| is_nonlink(j)));
            for _ in 0..draws {
                let j = candidates[rng.random_range(0..candidates.len())];
                out.push(DyadSample { i, j, label: -1, weight });
            }
        }
    }
    out
}

/// Weighted logistic loss over explicit samples: links contribute
/// `-w log sigmoid(r)`, non-links `-w log sigmoid(-r)`.
pub fn cc_loss(e: &Embedding, samples: &[DyadSample]) -> LossGrad {
    let mut acc = Accumulator::new(e);
    for s in samples {
        acc.logistic(s.i, s.j, s.label as f64, s.weight);
    }
    acc.finish()
}
