//! Adam with plateau learning-rate halving, and the training loop.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::check::{check, CheckMethod, DEFAULT_DENSE_CAP};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::loss::{cc_loss, cc_sample, logistic_loss_full, rn_loss, LossGrad};
use crate::model::{Embedding, ModelKind};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m_x: Array2<f64>,
    v_x: Array2<f64>,
    m_y: Array2<f64>,
    v_y: Array2<f64>,
    m_b: f64,
    v_b: f64,
}

fn check_finite(block: &'static str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient(block))
    }
}

impl AdamState {
    pub fn new(n: usize, d: usize, lr: f64) -> Self {
        Self {
            step: 0,
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPS,
            m_x: Array2::zeros((n, d)),
            v_x: Array2::zeros((n, d)),
            m_y: Array2::zeros((n, d)),
            v_y: Array2::zeros((n, d)),
            m_b: 0.0,
            v_b: 0.0,
        }
    }

    pub fn for_embedding(e: &Embedding, lr: f64) -> Self {
        Self::new(e.n(), e.dim(), lr)
    }

    /// One bias-corrected Adam update. Gradients are validated before any
    /// parameter is touched. The distance-model bias is clamped at zero.
    pub fn step(&mut self, e: &mut Embedding, g: &LossGrad) -> Result<()> {
        if g.grad_x.dim() != e.x.dim() || g.grad_y.dim() != e.y.dim() || self.m_x.dim() != e.x.dim() {
            return Err(Error::DimensionMismatch(format!(
                "gradient {:?} / state {:?} vs parameters {:?}",
                g.grad_x.dim(),
                self.m_x.dim(),
                e.x.dim()
            )));
        }
        check_finite("x", g.grad_x.iter().copied())?;
        check_finite("y", g.grad_y.iter().copied())?;
        check_finite("bias", [g.grad_bias])?;

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.eps, self.lr);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        };
        ndarray::Zip::from(&mut e.x)
            .and(&mut self.m_x)
            .and(&mut self.v_x)
            .and(&g.grad_x)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        ndarray::Zip::from(&mut e.y)
            .and(&mut self.m_y)
            .and(&mut self.v_y)
            .and(&g.grad_y)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        if e.model.has_bias() {
            update(&mut e.bias, &mut self.m_b, &mut self.v_b, g.grad_bias);
            if e.model == ModelKind::L2 && e.bias < 0.0 {
                e.bias = 0.0;
            }
        }
        Ok(())
    }
}

/// Halves the learning rate after `patience` consecutive epochs without a
/// strict improvement of the best loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        Self {
            lr,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= 0.5;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// Learning rate after replaying a loss history through the scheduler.
pub fn plateau_lr(history: &[f64], patience: usize, lr0: f64) -> f64 {
    let mut s = PlateauScheduler::new(lr0, patience);
    for &l in history {
        s.observe(l);
    }
    s.lr
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub patience: usize,
    pub check_every: usize,
    pub seed: u64,
    pub min_lr: f64,
    pub check_method: CheckMethod,
    pub dense_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5000,
            lr0: 1.0,
            patience: 200,
            check_every: 100,
            seed: 0,
            min_lr: 1e-6,
            check_method: CheckMethod::Auto,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.patience == 0 || self.check_every == 0 || !(self.lr0 > 0.0) {
            return Err(Error::InvalidArgument(
                "epochs, patience, check_every and lr must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    Full,
    /// Induced subgraph of `batch` uniformly drawn nodes per epoch.
    Rn { batch: usize },
    /// Case-control sampling with `k` non-links per link.
    Cc { k: usize },
    /// Two-stage HBDM then hinge refinement; driven by `hbdm::two_stage_fit`.
    Hbdm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub misclassified: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,loss,lr,misclassified")?;
        for r in &self.rows {
            let mis = r.misclassified.map(|m| m.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{}", r.epoch, r.loss, r.lr, mis)?;
        }
        Ok(())
    }

    /// Misclassified counts recorded at checks, in order.
    pub fn misclassified_series(&self) -> Vec<usize> {
        self.rows.iter().filter_map(|r| r.misclassified).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub embedding: Embedding,
    pub trace: TrainTrace,
    pub exact: bool,
    /// Optimizer steps taken.
    pub epochs: usize,
    /// Misclassified dyads at the last check.
    pub misclassified: usize,
}

fn epoch_loss<R: Rng + ?Sized>(e: &Embedding, g: &SparseGraph, loss: LossKind, rng: &mut R) -> Result<LossGrad> {
    Ok(match loss {
        LossKind::Full => logistic_loss_full(e, g),
        LossKind::Rn { batch } => {
            let batch = batch.clamp(1, g.n());
            let mut nodes = rand::seq::index::sample(rng, g.n(), batch).into_vec();
            nodes.sort_unstable();
            rn_loss(e, g, &nodes)
        }
        LossKind::Cc { k } => cc_loss(e, &cc_sample(g, k, rng)),
        LossKind::Hbdm => {
            return Err(Error::InvalidArgument(
                "the hbdm loss is trained through hbdm::two_stage_fit".into(),
            ))
        }
    })
}

/// Trains `e` on `g` with Adam. The reconstruction check runs before the
/// first step, every `check_every` steps and at the end; training stops as
/// soon as a check finds no misclassified dyad or the learning rate falls
/// below `min_lr`.
pub fn fit<R: Rng + ?Sized>(
    e: Embedding,
    g: &SparseGraph,
    loss: LossKind,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if e.n() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} nodes, graph has {}",
            e.n(),
            g.n()
        )));
    }
    let mut e = e;
    let mut trace = TrainTrace::default();
    let mut sched = PlateauScheduler::new(cfg.lr0, cfg.patience);
    let mut adam = AdamState::for_embedding(&e, cfg.lr0);

    let mut misclassified = check(&e, g, cfg.check_method, cfg.dense_cap)?.len();
    let initial_loss = logistic_loss_full_value(&e, g, loss);
    trace.rows.push(TraceRow {
        epoch: 0,
        loss: initial_loss,
        lr: cfg.lr0,
        misclassified: Some(misclassified),
    });
    let mut epochs = 0;
    while misclassified > 0 && epochs < cfg.epochs {
        let grads = epoch_loss(&e, g, loss, rng)?;
        adam.lr = sched.lr;
        adam.step(&mut e, &grads)?;
        epochs += 1;
        let lr = sched.observe(grads.value);
        let stalled = lr < cfg.min_lr;
        let mut row = TraceRow {
            epoch: epochs,
            loss: grads.value,
            lr: adam.lr,
            misclassified: None,
        };
        if epochs % cfg.check_every == 0 || epochs == cfg.epochs || stalled {
            misclassified = check(&e, g, cfg.check_method, cfg.dense_cap)?.len();
            row.misclassified = Some(misclassified);
        }
        trace.rows.push(row);
        if stalled {
            break;
        }
    }
    Ok(FitOutcome {
        exact: misclassified == 0,
        embedding: e,
        trace,
        epochs,
        misclassified,
    })
}

/// Loss reported for the epoch-0 trace row; sampled losses report NaN
/// rather than drawing from the sampling stream.
fn logistic_loss_full_value(e: &Embedding, g: &SparseGraph, loss: LossKind) -> f64 {
    match loss {
        LossKind::Full => logistic_loss_full(e, g).value,
        _ => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::dense_check;
    use crate::graph::{gen_block_graph, BlockMode};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grad(gx: Array2<f64>, gy: Array2<f64>, gb: f64) -> LossGrad {
        LossGrad {
            value: 0.0,
            grad_x: gx,
            grad_y: gy,
            grad_bias: gb,
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut e = Embedding::random(ModelKind::Eig, 4, 2, &mut rng);
        let before = e.clone();
        let mut adam = AdamState::for_embedding(&e, 0.1);
        adam.step(&mut e, &LossGrad::zeros(4, 2)).unwrap();
        assert_eq!(e, before);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut e = Embedding::new(ModelKind::Eig, array![[1.0, -1.0]], array![[0.5, 2.0]], 0.3).unwrap();
        let mut adam = AdamState::for_embedding(&e, 0.01);
        adam.step(&mut e, &grad(array![[3.0, -0.2]], array![[0.0, 1e-3]], -7.0)).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-7;
        assert!(close(e.x[[0, 0]], 0.99));
        assert!(close(e.x[[0, 1]], -0.99));
        assert!(close(e.y[[0, 0]], 0.5));
        assert!(close(e.y[[0, 1]], 1.99));
        assert!(close(e.bias, 0.31));
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        let mut e = Embedding::new(ModelKind::Lpca, array![[2.0]], array![[0.0]], 0.0).unwrap();
        let mut adam = AdamState::for_embedding(&e, 0.1);
        let (g1, g2) = (0.5, -1.5);
        adam.step(&mut e, &grad(array![[g1]], array![[0.0]], 0.0)).unwrap();
        adam.step(&mut e, &grad(array![[g2]], array![[0.0]], 0.0)).unwrap();

        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.1);
        let (mut p, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for (t, g) in [(1, g1), (2, g2)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((e.x[[0, 0]] - p).abs() < 1e-15, "{} vs {p}", e.x[[0, 0]]);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut e = Embedding::new(ModelKind::L2, array![[0.0]], array![[1.0]], 1.0).unwrap();
        let before = e.clone();
        let mut adam = AdamState::for_embedding(&e, 0.1);
        let err = adam.step(&mut e, &grad(array![[0.0]], array![[f64::NAN]], 0.0)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient("y")));
        assert_eq!(e, before);
        let err = adam.step(&mut e, &grad(array![[0.0]], array![[0.0]], f64::INFINITY)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient("bias")));
    }

    #[test]
    fn l2_bias_stays_non_negative() {
        let mut e = Embedding::new(ModelKind::L2, array![[0.0]], array![[1.0]], 0.001).unwrap();
        let mut adam = AdamState::for_embedding(&e, 0.5);
        adam.step(&mut e, &grad(array![[0.0]], array![[0.0]], 1.0)).unwrap();
        assert_eq!(e.bias, 0.0);
    }

    #[test]
    fn scheduler_examples() {
        let decreasing: Vec<f64> = (0..500).map(|i| 1000.0 - i as f64).collect();
        assert_eq!(plateau_lr(&decreasing, 3, 1.0), 1.0);

        let mut s = PlateauScheduler::new(1.0, 3);
        let lrs: Vec<f64> = (0..8).map(|_| s.observe(5.0)).collect();
        assert_eq!(lrs, vec![1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.25, 0.25]);

        let d = TrainConfig::default();
        assert_eq!((d.lr0, d.patience, d.check_every), (1.0, 200, 100));
    }

    #[test]
    fn scheduler_resets_on_improvement() {
        assert_eq!(plateau_lr(&[3.0, 3.0, 3.0, 2.0, 2.0, 2.0], 3, 1.0), 1.0);
        assert_eq!(plateau_lr(&[3.0, 3.0, 3.0, 3.0, 2.0, 2.0], 3, 1.0), 0.5);
    }

    #[test]
    fn fit_returns_immediately_when_exact() {
        let g = gen_block_graph(&[2, 2], BlockMode::Homophilous).unwrap();
        let pos = array![[0.0], [0.0], [3.0], [3.0]];
        let e = Embedding::new(ModelKind::L2, pos.clone(), pos, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = fit(e.clone(), &g, LossKind::Full, &TrainConfig::default(), &mut rng).unwrap();
        assert!(out.exact);
        assert_eq!(out.epochs, 0);
        assert_eq!(out.embedding, e);
        assert_eq!(out.trace.rows.len(), 1);
    }

    #[test]
    fn fit_two_blocks_l2_d1_is_exact() {
        let g = gen_block_graph(&[5, 5], BlockMode::Homophilous).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = Embedding::random(ModelKind::L2, 10, 1, &mut rng);
        let cfg = TrainConfig { lr0: 0.1, check_every: 10, ..TrainConfig::default() };
        let out = fit(e, &g, LossKind::Full, &cfg, &mut rng).unwrap();
        assert!(out.exact);
        assert!(dense_check(&out.embedding, &g, 100).unwrap().active.is_exact());
    }

    #[test]
    fn fit_is_deterministic() {
        let g = gen_block_graph(&[4, 4, 4], BlockMode::Homophilous).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let e = Embedding::random(ModelKind::Lpca, 12, 2, &mut rng);
            let cfg = TrainConfig { epochs: 300, lr0: 0.05, check_every: 50, ..TrainConfig::default() };
            fit(e, &g, LossKind::Cc { k: 2 }, &cfg, &mut rng).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(format!("{:?}", a.trace), format!("{:?}", b.trace));
    }

    #[test]
    fn lr_sequence_only_halves() {
        let g = gen_block_graph(&[3, 3, 3], BlockMode::Heterophilous).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = Embedding::random(ModelKind::Lpca, 9, 1, &mut rng);
        let cfg = TrainConfig { epochs: 2000, lr0: 0.5, patience: 5, ..TrainConfig::default() };
        let out = fit(e, &g, LossKind::Full, &cfg, &mut rng).unwrap();
        for w in out.trace.rows.windows(2) {
            assert!(w[1].lr == w[0].lr || w[1].lr == 0.5 * w[0].lr, "{} -> {}", w[0].lr, w[1].lr);
        }
    }
}
