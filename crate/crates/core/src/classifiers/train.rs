//! Gradient training of [`MlpModel`] under the standard per-class error
//! `sum_i H(p_i - delta_i)` and under the joint-class variant, where merged
//! classes share one output trained against membership in any constituent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{MlpGradient, MlpModel};
use super::risk::RiskMatrix;
use crate::datakit::Dataset;
use crate::eliminator::ClassGrouping;
use crate::error::{Error, Result};
use crate::math::argmax;

/// Shape of `H` applied to each output error `d = p_i - delta_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorFunction {
    /// `H(d) = ½ d²`
    Quadratic,
    /// `H(d) = -ln(1 - |d|)`: `-ln p` for the true class, `-ln(1 - p)` otherwise.
    CrossEntropy,
}

const CE_FLOOR: f64 = 1e-12;

impl ErrorFunction {
    pub fn value(self, d: f64) -> f64 {
        match self {
            ErrorFunction::Quadratic => 0.5 * d * d,
            ErrorFunction::CrossEntropy => -(1.0 - d.abs()).max(CE_FLOOR).ln(),
        }
    }

    /// `dH/dd`
    pub fn derivative(self, d: f64) -> f64 {
        match self {
            ErrorFunction::Quadratic => d,
            ErrorFunction::CrossEntropy => {
                let m = 1.0 - d.abs();
                if m <= CE_FLOOR {
                    0.0
                } else {
                    d.signum() / m
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub error: ErrorFunction,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Coefficient of `½ sum w²` over non-bias weights.
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without improvement of the monitored loss.
    pub patience: Option<usize>,
    /// Fraction of the training data held out to monitor generalization.
    pub validation_fraction: f64,
    pub seed: u64,
    /// Adds the expected risk `sum_i R(i, true) p_i` to every case loss.
    pub risk: Option<RiskMatrix>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            error: ErrorFunction::CrossEntropy,
            learning_rate: 0.1,
            momentum: 0.9,
            l2: 1e-4,
            epochs: 200,
            batch_size: 32,
            patience: None,
            validation_fraction: 0.0,
            seed: 0,
            risk: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config(format!("l2 must be nonnegative, got {}", self.l2)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Mean case loss plus the L2 penalty, and its gradient over the flat
/// parameter vector.
pub fn mlp_objective(
    model: &MlpModel,
    cases: &[Vec<f64>],
    targets: &[usize],
    cfg: &TrainConfig,
) -> (f64, MlpGradient) {
    let idx: Vec<usize> = (0..cases.len()).collect();
    objective_on(model, cases, targets, &idx, cfg)
}

fn objective_on(
    model: &MlpModel,
    cases: &[Vec<f64>],
    targets: &[usize],
    idx: &[usize],
    cfg: &TrainConfig,
) -> (f64, MlpGradient) {
    let mut grad = vec![0.0; model.n_params()];
    let scale = 1.0 / idx.len() as f64;
    let mut loss = 0.0;
    let k = model.n_outputs;
    let mut d_probs = vec![0.0; k];
    for &c in idx {
        let act = model.forward(&cases[c]);
        let y = targets[c];
        for i in 0..k {
            let d = act.probs[i] - if i == y { 1.0 } else { 0.0 };
            loss += cfg.error.value(d);
            d_probs[i] = cfg.error.derivative(d);
            if let Some(r) = &cfg.risk {
                loss += r.get(i, y) * act.probs[i];
                d_probs[i] += r.get(i, y);
            }
        }
        model.backward(&act, &d_probs, scale, &mut grad);
    }
    loss *= scale;
    if cfg.l2 > 0.0 {
        for ((g, p), is_weight) in grad.iter_mut().zip(model.params()).zip(model.weight_mask()) {
            if is_weight {
                *g += cfg.l2 * p;
                loss += 0.5 * cfg.l2 * p * p;
            }
        }
    }
    (loss, grad)
}

fn accuracy_on(model: &MlpModel, cases: &[Vec<f64>], targets: &[usize], idx: &[usize]) -> f64 {
    let hits = idx
        .iter()
        .filter(|&&c| argmax(&model.forward(&cases[c]).probs) == targets[c])
        .count();
    hits as f64 / idx.len().max(1) as f64
}

fn standardization(cases: &[Vec<f64>], idx: &[usize], n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = idx.len() as f64;
    let mut mean = vec![0.0; n];
    for &c in idx {
        for (acc, v) in mean.iter_mut().zip(&cases[c]) {
            *acc += v / m;
        }
    }
    let mut var = vec![0.0; n];
    for &c in idx {
        for ((acc, v), mu) in var.iter_mut().zip(&cases[c]).zip(&mean) {
            *acc += (v - mu) * (v - mu) / m;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, scale)
}

/// Core trainer over explicit integer targets in `0..n_outputs`.
pub(crate) fn fit(
    cases: &[Vec<f64>],
    targets: &[usize],
    n_outputs: usize,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainLog)> {
    cfg.validate()?;
    if hidden == 0 {
        return Err(Error::Config("hidden layer needs at least one unit".into()));
    }
    if cases.is_empty() {
        return Err(Error::Validation("cannot train on an empty dataset".into()));
    }
    if let Some(r) = &cfg.risk {
        r.check_size(n_outputs)?;
    }
    let n_inputs = cases[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..cases.len()).collect();
    let (train_idx, val_idx) = if cfg.validation_fraction > 0.0 {
        order.shuffle(&mut rng);
        let n_val = (cases.len() as f64 * cfg.validation_fraction).round() as usize;
        if n_val == 0 || n_val >= cases.len() {
            return Err(Error::Config("validation fraction leaves an empty split".into()));
        }
        let (v, t) = order.split_at(n_val);
        (t.to_vec(), v.to_vec())
    } else {
        (order, Vec::new())
    };
    let (offset, scale) = standardization(cases, &train_idx, n_inputs);
    let mut model = MlpModel::init(n_inputs, hidden, n_outputs, offset, scale, &mut rng);

    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut log = TrainLog::default();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut shuffled = train_idx.clone();
    for epoch in 1..=cfg.epochs {
        shuffled.shuffle(&mut rng);
        for batch in shuffled.chunks(cfg.batch_size) {
            let (_, grad) = objective_on(&model, cases, targets, batch, cfg);
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
            model.set_params(&params);
        }
        let (loss, _) = objective_on(&model, cases, targets, &train_idx, cfg);
        if !loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let validation_loss = (!val_idx.is_empty()).then(|| objective_on(&model, cases, targets, &val_idx, cfg).0);
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            train_accuracy: accuracy_on(&model, cases, targets, &train_idx),
            validation_loss,
        });
        let monitored = validation_loss.unwrap_or(loss);
        if monitored < best.0 {
            best = (monitored, params.clone(), epoch);
        }
        if let Some(patience) = cfg.patience {
            if epoch - best.2 >= patience {
                break;
            }
        }
    }
    if !val_idx.is_empty() || cfg.patience.is_some() {
        model.set_params(&best.1);
        log.best_epoch = best.2;
    } else {
        log.best_epoch = log.epochs.len();
    }
    Ok((model, log))
}

/// Trains a `N -> hidden -> K` softmax network on all classes of `train`.
pub fn train_mlp(train: &Dataset, hidden: usize, cfg: &TrainConfig) -> Result<(MlpModel, TrainLog)> {
    fit(&train.cases, &train.labels, train.n_classes(), hidden, cfg)
}

/// Trains a network with one output per group of `grouping`. A case whose
/// class belongs to a merged group counts as a member of that group.
pub fn train_joint(
    train: &Dataset,
    grouping: &ClassGrouping,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainLog)> {
    grouping.check_classes(train.n_classes())?;
    let targets: Vec<usize> = train.labels.iter().map(|&y| grouping.group_of(y)).collect();
    fit(&train.cases, &targets, grouping.len(), hidden, cfg)
}
