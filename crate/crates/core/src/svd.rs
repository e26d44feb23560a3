//! Randomized truncated SVD: Gaussian range finder with power iterations,
//! followed by an exact one-sided Jacobi SVD of the small projected matrix.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand::Rng;

use crate::error::{Error, Result};

pub const OVERSAMPLING: usize = 10;
pub const POWER_ITERATIONS: usize = 2;

/// Rank-`d` factors with `a ~ u * diag(s) * v^T`; singular values descend.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub v: Array2<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.s.view().insert_axis(Axis(0));
        us.dot(&self.v.t())
    }
}

/// Thin Householder QR; returns the `m x k` orthonormal factor.
fn orthonormal_basis(a: &Array2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    let k = k.min(m);
    let mut r = a.clone();
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(k);
    for c in 0..k {
        let mut v = r.slice(s![c.., c]).to_owned();
        let norm = v.dot(&v).sqrt();
        if norm == 0.0 {
            // Any unit reflector keeps Q orthogonal.
            v.fill(0.0);
            v[0] = 1.0;
        } else {
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vn = v.dot(&v).sqrt();
            v /= vn;
        }
        let mut sub = r.slice_mut(s![c.., c..]);
        let proj = v.dot(&sub);
        for (mut row, &vi) in sub.rows_mut().into_iter().zip(v.iter()) {
            row.scaled_add(-2.0 * vi, &proj);
        }
        reflectors.push(v);
    }
    let mut q = Array2::<f64>::zeros((m, k));
    for c in 0..k {
        q[[c, c]] = 1.0;
    }
    for (c, v) in reflectors.iter().enumerate().rev() {
        let mut sub = q.slice_mut(s![c.., ..]);
        let proj = v.dot(&sub);
        for (mut row, &vi) in sub.rows_mut().into_iter().zip(v.iter()) {
            row.scaled_add(-2.0 * vi, &proj);
        }
    }
    q
}

/// One-sided Jacobi SVD of an `m x n` matrix with `m >= n`.
fn jacobi_tall(a: &Array2<f64>) -> Svd {
    let (_, n) = a.dim();
    let mut w = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (cp, cq) = (w.column(p), w.column(q));
                let alpha = cp.dot(&cp);
                let beta = cq.dot(&cq);
                let gamma = cp.dot(&cq);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sv: Vec<f64> = (0..n).map(|c| w.column(c).dot(&w.column(c)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let m = a.nrows();
    let mut u = Array2::zeros((m, n));
    let mut vs = Array2::zeros((n, n));
    let mut s = Array1::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = sv[src];
        if sv[src] > 0.0 {
            u.column_mut(dst).assign(&(&w.column(src) / sv[src]));
        }
        vs.column_mut(dst).assign(&v.column(src));
    }
    Svd { u, s, v: vs }
}

fn rotate(m: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    for mut row in m.rows_mut() {
        let (a, b) = (row[p], row[q]);
        row[p] = c * a - s * b;
        row[q] = s * a + c * b;
    }
}

/// Exact thin SVD via one-sided Jacobi.
pub fn full_svd(a: ArrayView2<f64>) -> Svd {
    let (m, n) = a.dim();
    if m >= n {
        jacobi_tall(&a.to_owned())
    } else {
        let t = jacobi_tall(&a.t().to_owned());
        Svd { u: t.v, s: t.s, v: t.u }
    }
}

/// Rank-`d` randomized SVD, deterministic given `seed`.
pub fn truncated_svd(a: ArrayView2<f64>, d: usize, seed: u64) -> Result<Svd> {
    let (m, n) = a.dim();
    if d == 0 || d > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank {d} must be in 1..={} for a {m}x{n} matrix",
            m.min(n)
        )));
    }
    let k = (d + OVERSAMPLING).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Array2::from_shape_simple_fn((n, k), || rng.sample::<f64, _>(StandardNormal));
    let mut q = orthonormal_basis(&a.dot(&omega));
    for _ in 0..POWER_ITERATIONS {
        let z = orthonormal_basis(&a.t().dot(&q));
        q = orthonormal_basis(&a.dot(&z));
    }
    let b = q.t().dot(&a);
    let small = full_svd(b.view());
    let u = q.dot(&small.u.slice(s![.., ..d]));
    Ok(Svd {
        u,
        s: small.s.slice(s![..d]).to_owned(),
        v: small.v.slice(s![.., ..d]).to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_matrix(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((m, n), || rng.sample::<f64, _>(StandardNormal))
    }

    fn fro(a: &Array2<f64>) -> f64 {
        a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Best rank-d error from nalgebra's SVD.
    fn oracle_tail_error(a: &Array2<f64>, d: usize) -> f64 {
        let m = DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied());
        let sv = m.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv[d..].iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    #[test]
    fn householder_basis_is_orthonormal() {
        let a = random_matrix(40, 7, 1);
        let q = orthonormal_basis(&a);
        let qtq = q.t().dot(&q);
        for i in 0..7 {
            for j in 0..7 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[[i, j]] - want).abs() < 1e-12);
            }
        }
        // spans the columns of a
        let resid = &a - &q.dot(&q.t().dot(&a));
        assert!(fro(&resid) < 1e-10 * fro(&a));
    }

    #[test]
    fn rank_one_is_recovered() {
        let u = random_matrix(30, 1, 2);
        let v = random_matrix(1, 12, 3);
        let a = u.dot(&v);
        let svd = truncated_svd(a.view(), 1, 0).unwrap();
        assert!(fro(&(&svd.reconstruct() - &a)) <= 1e-10 * fro(&a));
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let svd = truncated_svd(Array2::<f64>::eye(5).view(), 5, 4).unwrap();
        for s in svd.s.iter() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_bounds_are_checked() {
        let a = random_matrix(4, 3, 5);
        assert!(truncated_svd(a.view(), 4, 0).is_err());
        assert!(truncated_svd(a.view(), 0, 0).is_err());
    }

    #[test]
    fn random_matrix_error_near_optimal() {
        let a = random_matrix(100, 20, 6);
        let svd = truncated_svd(a.view(), 10, 7).unwrap();
        let err = fro(&(&svd.reconstruct() - &a));
        let best = oracle_tail_error(&a, 10);
        assert!(err <= 1.05 * best, "{err} vs {best}");
        let vtv = svd.v.t().dot(&svd.v);
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[[i, j]] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jacobi_matches_nalgebra_singular_values() {
        for (m, n, seed) in [(8, 8, 1), (15, 4, 2), (3, 9, 3)] {
            let a = random_matrix(m, n, seed);
            let ours = full_svd(a.view());
            let dm = DMatrix::from_row_iterator(m, n, a.iter().copied());
            let mut theirs: Vec<f64> = dm.singular_values().iter().copied().collect();
            theirs.sort_by(|a, b| b.total_cmp(a));
            for (x, y) in ours.s.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-10 * theirs[0]);
            }
            assert!(fro(&(&ours.reconstruct() - &a)) < 1e-10 * fro(&a));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = random_matrix(50, 30, 8);
        let x = truncated_svd(a.view(), 5, 11).unwrap();
        let y = truncated_svd(a.view(), 5, 11).unwrap();
        assert_eq!(x.u, y.u);
        assert_eq!(x.v, y.v);
    }
}
