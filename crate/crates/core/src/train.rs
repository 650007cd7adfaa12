//! Minibatch Adam training of link models and evaluation metrics.
//!
//! Both learners share one loop: per-epoch shuffles, minibatches of the
//! mean negative log-likelihood, Adam with coupled weight decay, and a
//! step learning-rate schedule. The LegendreTron learner differentiates
//! through the gradient chain on a tape; multinomial logistic regression
//! has no chain and uses the closed-form gradient `(p̂ − e_y) xᵀ`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{LabeledDataset, SparseVector};
use crate::error::{Error, Result};
use crate::model::LinkModel;

/// Which learner to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Linear predictor with a learned chain of convex-gradient blocks.
    Lt,
    /// Multinomial logistic regression.
    Mlr,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Lt => "lt",
            Algo::Mlr => "mlr",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lt" => Ok(Algo::Lt),
            "mlr" => Ok(Algo::Mlr),
            _ => Err(Error::Config(format!("unknown algorithm `{s}` (expected lt or mlr)"))),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Coupled L2 penalty: `λ·θ` is added to every gradient.
    pub weight_decay: f64,
    /// Multiplier `γ` applied every `decay_step` epochs.
    pub lr_decay: f64,
    pub decay_step: usize,
    /// Number of convex blocks `B` (ignored by MLR).
    pub blocks: usize,
    /// Hidden width `H` of each block.
    pub hidden: usize,
    /// Hidden layers `M` of each block.
    pub layers: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 240,
            batch_size: 64,
            learning_rate: 0.01,
            weight_decay: 0.0,
            lr_decay: 0.95,
            decay_step: 4,
            blocks: 2,
            hidden: 2,
            layers: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings used for the MNIST-family image benchmarks.
    pub fn mnist() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            learning_rate: 0.001,
            lr_decay: 0.7,
            blocks: 1,
            hidden: 4,
            layers: 4,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning-rate decay must lie in (0, 1]");
        }
        if self.decay_step == 0 {
            return bad("decay step must be positive");
        }
        if self.blocks > 0 && (self.hidden == 0 || self.layers == 0) {
            return bad("block width and depth must be positive");
        }
        Ok(())
    }

    /// `α · γ^⌊epoch / S⌋` for zero-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.decay_step) as i32)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update of the parameter groups (laid out in gradient order).
    pub fn step(&mut self, params: &mut [&mut [f64]], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for group in params.iter_mut() {
            for theta in group.iter_mut() {
                let g = grad[k];
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[k] / c1;
                let v_hat = self.v[k] / c2;
                *theta -= lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

/// Training progress after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean minibatch NLL over the epoch, each batch measured before its
    /// update.
    pub train_nll: f64,
}

/// Accuracy, NLL and (for two classes) AUC, plus a training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub mean_nll: f64,
    /// Area under the ROC curve scoring class 2 as positive; present only
    /// for two-class models when both classes occur.
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<EpochRecord>,
}

/// Trains LegendreTron.
pub fn train_legendretron(data: &LabeledDataset, cfg: &TrainConfig) -> Result<(LinkModel, Metrics)> {
    train(data, cfg, Algo::Lt)
}

/// Trains multinomial logistic regression (no chain).
pub fn train_mlr(data: &LabeledDataset, cfg: &TrainConfig) -> Result<(LinkModel, Metrics)> {
    train(data, cfg, Algo::Mlr)
}

/// Runs `algo`; the returned metrics are measured on `data` after the final
/// epoch and carry the per-epoch trace.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig, algo: Algo) -> Result<(LinkModel, Metrics)> {
    let model = fit(data, cfg, algo, |_, _| ())?;
    let mut metrics = evaluate(&model.0, data)?;
    metrics.trace = model.1;
    Ok((model.0, metrics))
}

/// Training loop with a callback after each epoch.
pub fn fit<F>(data: &LabeledDataset, cfg: &TrainConfig, algo: Algo, mut on_epoch: F) -> Result<(LinkModel, Vec<EpochRecord>)>
where
    F: FnMut(&LinkModel, &EpochRecord),
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = data.n_classes();
    if classes < 2 {
        return Err(Error::TooFewClasses { min: 2, found: classes });
    }
    let blocks = match algo {
        Algo::Lt => cfg.blocks,
        Algo::Mlr => 0,
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let (hidden, layers) = (cfg.hidden.max(1), cfg.layers.max(1));
    let mut model = LinkModel::new(classes, data.n_features(), blocks, hidden, layers, &mut init_rng)?;

    let n = data.len();
    let mut adam = Adam::new(model.param_count());
    let mut grad = vec![0.0; model.param_count()];
    let mut tape = Tape::with_capacity(1 << 14);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let lr = cfg.learning_rate_at(epoch);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / idx.len() as f64;
            let mut loss = 0.0;
            for &i in idx {
                let (x, y) = (&data.rows()[i], data.labels()[i]);
                loss += match algo {
                    Algo::Lt => model.accumulate_loss_grad(&mut tape, x, y, scale, &mut grad)?,
                    Algo::Mlr => mlr_loss_grad(&model, x, y, scale, &mut grad)?,
                };
            }
            if cfg.weight_decay > 0.0 {
                for (g, theta) in grad.iter_mut().zip(model.params_flat()) {
                    *g += cfg.weight_decay * theta;
                }
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                let ids = data.row_ids();
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    first_row: ids[idx[0]],
                    last_row: ids[idx[idx.len() - 1]],
                });
            }
            total += loss;
            adam.step(&mut model.param_slices_mut(), &grad, lr);
        }
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            train_nll: total / n as f64,
        };
        on_epoch(&model, &record);
        trace.push(record);
    }
    Ok((model, trace))
}

/// Closed-form multinomial-logistic gradient for a chain-free model.
fn mlr_loss_grad(model: &LinkModel, x: &SparseVector, y: usize, scale: f64, grad: &mut [f64]) -> Result<f64> {
    debug_assert!(model.chain().is_empty());
    let lp = model.log_probs(x)?;
    let classes = model.n_classes();
    if y == 0 || y > classes {
        return Err(Error::LabelOutOfRange { label: y, classes });
    }
    let (p, d) = (model.n_features(), model.link_dim());
    let (gw, rest) = grad.split_at_mut(d * p);
    for (i, &l) in lp[..d].iter().enumerate() {
        let r = scale * (l.exp() - if i + 1 == y { 1.0 } else { 0.0 });
        rest[i] += r;
        let row = &mut gw[i * p..(i + 1) * p];
        for (j, v) in x.iter() {
            row[j] += r * v;
        }
    }
    Ok(-lp[y - 1])
}

/// Accuracy, mean NLL and binary AUC of `model` on `data`.
pub fn evaluate(model: &LinkModel, data: &LabeledDataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = model.n_classes();
    let mut correct = 0usize;
    let mut nll = 0.0;
    let mut scores = Vec::with_capacity(if classes == 2 { data.len() } else { 0 });
    for (x, &y) in data.rows().iter().zip(data.labels()) {
        if y == 0 || y > classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        let lp = model.log_probs(x)?;
        if crate::model::argmax_class(&lp) == y {
            correct += 1;
        }
        nll -= lp[y - 1];
        if classes == 2 {
            scores.push(lp[1]);
        }
    }
    let n = data.len();
    let auc = if classes == 2 {
        let positive: Vec<bool> = data.labels().iter().map(|&y| y == 2).collect();
        auc(&scores, &positive)
    } else {
        None
    };
    Ok(Metrics {
        n,
        accuracy: correct as f64 / n as f64,
        mean_nll: nll / n as f64,
        auc,
        trace: Vec::new(),
    })
}

/// Rank-statistic AUC (ties get average ranks); `None` when one class is
/// missing.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * avg;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}
