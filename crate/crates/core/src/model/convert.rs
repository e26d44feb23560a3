//! Exact conversions between reconstruction models. Each converter
//! preserves the sign of every dyad logit, so exact embeddings map to exact
//! embeddings at the stated rank.

use ndarray::{s, Array1, Array2, Axis};

use super::{Embedding, ModelKind};
use crate::error::{Error, Result};

fn require(e: &Embedding, model: ModelKind) -> Result<()> {
    if e.model != model {
        return Err(Error::WrongModel {
            expected: model.to_string(),
            found: e.model.to_string(),
        });
    }
    Ok(())
}

/// Rank `D + 2` LPCA embedding with `x'_i . y'_j = bias^2 - |x_i - y_j|^2`.
///
/// Rows are `x'_i = (bias^2 - |x_i|^2, 1, x_i)` and `y'_j = (1, -|y_j|^2, 2 y_j)`,
/// computed after centering both point sets on their joint mean.
pub fn lpca_from_l2(e: &Embedding) -> Result<Embedding> {
    require(e, ModelKind::L2)?;
    let (n, d) = (e.n(), e.dim());
    let mean: Array1<f64> = ndarray::concatenate(Axis(0), &[e.x.view(), e.y.view()])
        .expect("equal widths")
        .mean_axis(Axis(0))
        .expect("non-empty");
    let xc = &e.x - &mean;
    let yc = &e.y - &mean;
    let beta2 = e.bias * e.bias;

    let mut x = Array2::zeros((n, d + 2));
    let mut y = Array2::zeros((n, d + 2));
    for i in 0..n {
        let xi = xc.row(i);
        let yi = yc.row(i);
        x[[i, 0]] = beta2 - xi.dot(&xi);
        x[[i, 1]] = 1.0;
        x.slice_mut(s![i, 2..]).assign(&xi);
        y[[i, 0]] = 1.0;
        y[[i, 1]] = -yi.dot(&yi);
        y.slice_mut(s![i, 2..]).assign(&(&yi * 2.0));
    }
    Embedding::new(ModelKind::Lpca, x, y, 0.0)
}

/// Same-rank L2 embedding from row-normalized LPCA factors with bias `sqrt(2)`.
///
/// On the unit sphere `|x - y|^2 = 2 - 2 x.y`, so `sqrt(2) - |x - y|` has the
/// sign of `x . y`, and positive row scalings never change LPCA signs.
pub fn l2_from_lpca(e: &Embedding) -> Result<Embedding> {
    require(e, ModelKind::Lpca)?;
    let normalize = |m: &Array2<f64>, name: &'static str| -> Result<Array2<f64>> {
        let mut out = m.clone();
        for (row, mut r) in out.rows_mut().into_iter().enumerate() {
            let norm = r.dot(&r).sqrt();
            if norm == 0.0 {
                return Err(Error::ZeroRow { matrix: name, row });
            }
            r.mapv_inplace(|v| v / norm);
        }
        Ok(out)
    };
    let x = normalize(&e.x, "x")?;
    let y = normalize(&e.y, "y")?;
    Embedding::new(ModelKind::L2, x, y, std::f64::consts::SQRT_2)
}

/// LPCA logits are eigenmodel logits with zero bias.
pub fn eig_from_lpca(e: &Embedding) -> Result<Embedding> {
    require(e, ModelKind::Lpca)?;
    Embedding::new(ModelKind::Eig, e.x.clone(), e.y.clone(), 0.0)
}

/// Folds the bias into a leading column pair: `[bias 1, X][1, Y]^T`, rank `D + 1`.
pub fn lpca_from_eig(e: &Embedding) -> Result<Embedding> {
    require(e, ModelKind::Eig)?;
    let n = e.n();
    let bias_col = Array2::from_elem((n, 1), e.bias);
    let ones = Array2::ones((n, 1));
    let x = ndarray::concatenate(Axis(1), &[bias_col.view(), e.x.view()]).expect("rows match");
    let y = ndarray::concatenate(Axis(1), &[ones.view(), e.y.view()]).expect("rows match");
    Embedding::new(ModelKind::Lpca, x, y, 0.0)
}
