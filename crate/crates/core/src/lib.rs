//! Exact embedding dimension (EED) search for graphs.
//!
//! The crate learns node embeddings under three reconstruction models
//! (logistic PCA, the latent eigenmodel and the Euclidean latent distance
//! model) and searches for the smallest rank at which every link and
//! non-link of a graph is reproduced by the sign of the model logit.
//!
//! Module overview:
//!
//! * [`graph`]: sparse adjacency, edge-list IO, synthetic generators, statistics.
//! * [`model`]: embeddings, logits and the exact converters between models.
//! * [`loss`]: logistic, hinge, random-node and case-control objectives with gradients.
//! * [`optim`]: Adam, plateau learning-rate halving and the training loop.
//! * [`check`]: dense and KD-tree exactness checks, hinge active-set refinement.
//! * [`hbdm`]: hierarchical block distance model and the two-stage large-graph fit.
//! * [`search`]: truncated SVD warm starts and the logarithmic dimension search.

pub mod check;
pub mod error;
pub mod graph;
pub mod hbdm;
pub mod kdtree;
pub mod loss;
pub mod model;
pub mod optim;
pub mod search;
pub mod svd;

mod numeric;

pub use error::{Error, Result};
pub use graph::{GraphStats, SparseGraph};
pub use model::{Embedding, ModelKind};
