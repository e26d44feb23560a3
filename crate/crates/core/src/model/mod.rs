//! Embedding parameters and the three reconstruction models.

mod convert;
mod io;

pub use convert::{eig_from_lpca, l2_from_lpca, lpca_from_eig, lpca_from_l2};
pub use io::{load_embedding, read_embedding, save_embedding, write_embedding};

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, sq_dist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `r_ij = x_i . y_j`
    Lpca,
    /// `r_ij = bias + x_i . y_j`
    Eig,
    /// `r_ij = bias - |x_i - y_j|`
    L2,
}

impl ModelKind {
    pub fn has_bias(self) -> bool {
        !matches!(self, ModelKind::Lpca)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lpca => "lpca",
            ModelKind::Eig => "eig",
            ModelKind::L2 => "l2",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lpca" => Ok(ModelKind::Lpca),
            "eig" => Ok(ModelKind::Eig),
            "l2" => Ok(ModelKind::L2),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

/// Source embeddings `x` (N x D), target embeddings `y` (N x D) and the
/// scalar bias. The bias is ignored (and kept at zero) for LPCA.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub model: ModelKind,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub bias: f64,
}

impl Embedding {
    pub fn new(model: ModelKind, x: Array2<f64>, y: Array2<f64>, bias: f64) -> Result<Self> {
        let bias = if model.has_bias() { bias } else { 0.0 };
        let e = Self {
            model,
            x: x.as_standard_layout().into_owned(),
            y: y.as_standard_layout().into_owned(),
            bias,
        };
        e.validate()?;
        Ok(e)
    }

    /// Entries drawn from N(0, 1); the bias from U(0, 1) for models that have one.
    pub fn random<R: Rng + ?Sized>(model: ModelKind, n: usize, d: usize, rng: &mut R) -> Self {
        assert!(n >= 1 && d >= 1, "embedding needs n >= 1 and d >= 1");
        let x = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
        let y = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
        let bias = if model.has_bias() { rng.random::<f64>() } else { 0.0 };
        Self { model, x, y, bias }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.dim() != self.y.dim() {
            return Err(Error::DimensionMismatch(format!(
                "x is {:?} but y is {:?}",
                self.x.dim(),
                self.y.dim()
            )));
        }
        if self.x.ncols() == 0 || self.x.nrows() == 0 {
            return Err(Error::InvalidEmbedding("embedding needs N >= 1 and D >= 1".into()));
        }
        if !self.x.iter().chain(self.y.iter()).all(|v| v.is_finite()) || !self.bias.is_finite() {
            return Err(Error::InvalidEmbedding("non-finite entry".into()));
        }
        if self.model == ModelKind::L2 && self.bias < 0.0 {
            return Err(Error::InvalidEmbedding(format!(
                "L2 bias is a radius and must be non-negative, got {}",
                self.bias
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.x.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn y_row(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.y.as_slice().expect("standard layout")[j * d..(j + 1) * d]
    }

    /// Model logit `r_ij` for the ordered dyad `(i, j)`.
    #[inline]
    pub fn logit(&self, i: usize, j: usize) -> f64 {
        let (xi, yj) = (self.x_row(i), self.y_row(j));
        match self.model {
            ModelKind::Lpca => dot(xi, yj),
            ModelKind::Eig => self.bias + dot(xi, yj),
            ModelKind::L2 => self.bias - sq_dist(xi, yj).sqrt(),
        }
    }

    /// A link is predicted iff the logit is strictly positive.
    #[inline]
    pub fn predict_link(&self, i: usize, j: usize) -> bool {
        self.logit(i, j) > 0.0
    }
}
