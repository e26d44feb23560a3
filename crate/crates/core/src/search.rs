//! Logarithmic search for the exact embedding dimension with SVD warm starts.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::check::{check, CheckMethod};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::hbdm::{two_stage_fit, TwoStageConfig};
use crate::model::{Embedding, ModelKind};
use crate::optim::{fit, LossKind, TrainConfig, TrainTrace};
use crate::svd::truncated_svd;

/// Named random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Sampling = 2,
    Svd = 3,
    Kmeans = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Projects `e` onto `d_new` dimensions using the top right singular
/// vectors of the stacked `[X; Y]`, centred first for the distance model.
/// Growing the dimension pads with N(0, 1e-4) noise columns instead.
pub fn warm_start<R: Rng + ?Sized>(e: &Embedding, d_new: usize, rng: &mut R) -> Result<Embedding> {
    if d_new == 0 {
        return Err(Error::InvalidArgument("target dimension must be positive".into()));
    }
    let (n, d) = (e.n(), e.dim());
    if d_new == d {
        return Ok(e.clone());
    }
    if d_new > d {
        let noise = Normal::new(0.0, 1e-2).expect("valid normal");
        let pad = |m: &Array2<f64>, rng: &mut R| {
            let mut out = Array2::zeros((n, d_new));
            out.slice_mut(s![.., ..d]).assign(m);
            for v in out.slice_mut(s![.., d..]).iter_mut() {
                *v = noise.sample(rng);
            }
            out
        };
        let x = pad(&e.x, rng);
        let y = pad(&e.y, rng);
        return Embedding::new(e.model, x, y, e.bias);
    }
    let mut z = concatenate(Axis(0), &[e.x.view(), e.y.view()]).expect("same width");
    let mu: Array1<f64> = if e.model == ModelKind::L2 {
        z.mean_axis(Axis(0)).expect("non-empty")
    } else {
        Array1::zeros(d)
    };
    z -= &mu;
    let svd = truncated_svd(z.view(), d_new, rng.random())?;
    let x = (&e.x - &mu).dot(&svd.v);
    let y = (&e.y - &mu).dot(&svd.v);
    Embedding::new(e.model, x, y, e.bias)
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchConfig {
    pub lb: usize,
    pub ub: usize,
    pub model: ModelKind,
    pub loss: LossKind,
    pub train: TrainConfig,
    /// Used only with [`LossKind::Hbdm`]; its `train` is replaced by `train` above.
    pub two_stage: TwoStageConfig,
}

impl SearchConfig {
    pub fn new(model: ModelKind, lb: usize, ub: usize) -> Self {
        Self {
            lb,
            ub,
            model,
            loss: LossKind::Full,
            train: TrainConfig::default(),
            two_stage: TwoStageConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lb < 1 || self.lb >= self.ub {
            return Err(Error::InvalidArgument(format!(
                "search range needs 1 <= lb < ub, got [{}, {}]",
                self.lb, self.ub
            )));
        }
        if self.loss == LossKind::Hbdm && self.model != ModelKind::L2 {
            return Err(Error::InvalidArgument("the hbdm loss needs the l2 model".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub embedding: Embedding,
    pub exact: bool,
    pub epochs: usize,
    pub misclassified: usize,
    pub trace: TrainTrace,
}

/// Trains one trial with the configured loss.
pub fn train_trial<R: Rng + ?Sized>(
    e: Embedding,
    g: &SparseGraph,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<TrialOutcome> {
    if cfg.loss == LossKind::Hbdm {
        let two = TwoStageConfig {
            train: cfg.train.clone(),
            ..cfg.two_stage.clone()
        };
        let out = two_stage_fit(e, g, &two, rng)?;
        let misclassified = out.misclassified();
        let mut trace = out.stage1;
        let last = trace.rows.last().map(|r| r.epoch).unwrap_or(0);
        for (k, &m) in out.stage2_misclassified.iter().enumerate().skip(1) {
            trace.rows.push(crate::optim::TraceRow {
                epoch: last + k * two.refine.inner_epochs,
                loss: f64::NAN,
                lr: two.refine.lr,
                misclassified: Some(m),
            });
        }
        return Ok(TrialOutcome {
            embedding: out.embedding,
            exact: out.exact,
            epochs: out.epochs,
            misclassified,
            trace,
        });
    }
    let out = fit(e, g, cfg.loss, &cfg.train, rng)?;
    Ok(TrialOutcome {
        embedding: out.embedding,
        exact: out.exact,
        epochs: out.epochs,
        misclassified: out.misclassified,
        trace: out.trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub dim: usize,
    pub exact: bool,
    pub epochs: usize,
    pub misclassified: usize,
    pub warm_start: bool,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub d_star: Option<usize>,
    pub trials: Vec<TrialRecord>,
    pub traces: Vec<TrainTrace>,
    pub best: Option<Embedding>,
    /// Embedding produced by the most recent trial.
    pub last_trial: Embedding,
}

impl SearchResult {
    /// True when training at the upper bound already failed.
    pub fn aborted(&self) -> bool {
        self.d_star.is_none()
    }
}

fn verify(e: &Embedding, g: &SparseGraph, train: &TrainConfig) -> Result<()> {
    // Re-check with a method independent of the one used during training
    // whenever the dense enumeration is affordable.
    let method = if g.n() <= train.dense_cap {
        CheckMethod::Dense
    } else {
        CheckMethod::KdTree
    };
    let method = if e.model != ModelKind::L2 { CheckMethod::Dense } else { method };
    let active = check(e, g, method, train.dense_cap)?;
    if active.is_exact() {
        Ok(())
    } else {
        Err(Error::InvalidEmbedding(format!(
            "reported exact embedding misclassifies {} dyads",
            active.len()
        )))
    }
}

/// Binary search over `[lb, ub]`. The first trial trains a random
/// embedding at `ub`; if it is not exact the search stops with no result.
/// Later trials warm-start from the latest exact solution.
pub fn search_eed(g: &SparseGraph, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let mut init_rng = stream_rng(seed, Stream::Init);
    let mut sample_rng = stream_rng(seed, Stream::Sampling);
    let mut svd_rng = stream_rng(seed, Stream::Svd);

    let (mut lb, mut ub) = (cfg.lb, cfg.ub);
    let e0 = Embedding::random(cfg.model, g.n(), ub, &mut init_rng);
    let mut result = SearchResult {
        d_star: None,
        trials: Vec::new(),
        traces: Vec::new(),
        best: None,
        last_trial: e0.clone(),
    };
    let record = |result: &mut SearchResult, dim, warm, out: &TrialOutcome| {
        result.last_trial = out.embedding.clone();
        result.trials.push(TrialRecord {
            dim,
            exact: out.exact,
            epochs: out.epochs,
            misclassified: out.misclassified,
            warm_start: warm,
        });
        result.traces.push(out.trace.clone());
    };

    let first = train_trial(e0, g, cfg, &mut sample_rng)?;
    record(&mut result, ub, false, &first);
    if !first.exact {
        return Ok(result);
    }
    verify(&first.embedding, g, &cfg.train)?;
    result.d_star = Some(ub);
    let mut best = first.embedding;
    ub -= 1;

    while lb <= ub {
        let d = (lb + ub) / 2;
        let init = warm_start(&best, d, &mut svd_rng)?;
        let out = train_trial(init, g, cfg, &mut sample_rng)?;
        record(&mut result, d, true, &out);
        if out.exact {
            verify(&out.embedding, g, &cfg.train)?;
            result.d_star = Some(d);
            best = out.embedding;
            if d == lb {
                break;
            }
            ub = d - 1;
        } else {
            if d == ub {
                break;
            }
            lb = d + 1;
        }
    }
    result.best = Some(best);
    Ok(result)
}

/// Smallest `D` in `1..=max_dim` reached from a fresh random start at each
/// dimension, as in an incremental sweep.
pub fn incremental_sweep(g: &SparseGraph, model: ModelKind, max_dim: usize, cfg: &SearchConfig) -> Result<Option<(usize, Embedding)>> {
    let mut init_rng = stream_rng(cfg.train.seed, Stream::Init);
    let mut sample_rng = stream_rng(cfg.train.seed, Stream::Sampling);
    for d in 1..=max_dim {
        let e = Embedding::random(model, g.n(), d, &mut init_rng);
        let out = train_trial(e, g, cfg, &mut sample_rng)?;
        if out.exact {
            verify(&out.embedding, g, &cfg.train)?;
            return Ok(Some((d, out.embedding)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub dim: usize,
    pub misclassified: usize,
    pub total_dyads: usize,
    pub embedding: Embedding,
}

impl SweepPoint {
    pub fn fraction(&self) -> f64 {
        self.misclassified as f64 / self.total_dyads.max(1) as f64
    }
}

/// Compresses an embedding one dimension at a time below its rank, each
/// step warm-started from the previous one and trained with `cfg`.
pub fn compression_sweep(e: &Embedding, g: &SparseGraph, cfg: &SearchConfig) -> Result<Vec<SweepPoint>> {
    let mut svd_rng = stream_rng(cfg.train.seed, Stream::Svd);
    let mut sample_rng = stream_rng(cfg.train.seed, Stream::Sampling);
    let active = check(e, g, cfg.train.check_method, cfg.train.dense_cap)?;
    let mut points = vec![SweepPoint {
        dim: e.dim(),
        misclassified: active.len(),
        total_dyads: active.total_dyads,
        embedding: e.clone(),
    }];
    let mut current = e.clone();
    for d in (1..e.dim()).rev() {
        let init = warm_start(&current, d, &mut svd_rng)?;
        let out = train_trial(init, g, cfg, &mut sample_rng)?;
        let active = check(&out.embedding, g, cfg.train.check_method, cfg.train.dense_cap)?;
        current = out.embedding;
        points.push(SweepPoint {
            dim: d,
            misclassified: active.len(),
            total_dyads: active.total_dyads,
            embedding: current.clone(),
        });
    }
    Ok(points)
}

/// Graph predicted by an embedding: `(i, j)` is a link iff its logit is positive.
pub fn reconstructed_graph(e: &Embedding, template: &SparseGraph) -> Result<SparseGraph> {
    let n = e.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if template.is_dyad(i, j) && e.predict_link(i, j) {
                edges.push((i, j));
            }
        }
    }
    SparseGraph::from_edges(n, edges, true, template.include_self_loops())
}
