use serde::{Deserialize, Serialize};

use super::{check_dim, ClassProbabilities, Classifier};
use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Manhattan,
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnMode {
    /// One-hot on the majority class.
    Crisp,
    /// Fraction of the k votes per class.
    Vote,
}

/// k-nearest-neighbour classifier over a stored training set.
///
/// Ties are resolved toward the lowest class index everywhere: among
/// equidistant candidates for the k-th slot, and among equal vote counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub cases: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub k: usize,
    pub metric: Metric,
    pub mode: KnnMode,
}

impl KnnModel {
    pub fn fit(train: &Dataset, k: usize, metric: Metric, mode: KnnMode) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Validation("kNN needs a non-empty training set".into()));
        }
        if k == 0 || k > train.len() {
            return Err(Error::Config(format!(
                "k must lie in 1..={}, got {k}",
                train.len()
            )));
        }
        Ok(KnnModel {
            cases: train.cases.clone(),
            labels: train.labels.clone(),
            n_classes: train.n_classes(),
            k,
            metric,
            mode,
        })
    }

    fn votes(&self, x: &[f64], skip: Option<usize>) -> Vec<usize> {
        let mut scored: Vec<(f64, usize, usize)> = self
            .cases
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(i, c)| (self.metric.distance(c, x), self.labels[i], i))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut votes = vec![0usize; self.n_classes];
        for &(_, y, _) in scored.iter().take(self.k) {
            votes[y] += 1;
        }
        votes
    }

    fn to_probs(&self, votes: &[usize]) -> ClassProbabilities {
        match self.mode {
            KnnMode::Crisp => {
                let v: Vec<f64> = votes.iter().map(|&c| c as f64).collect();
                ClassProbabilities::one_hot(self.n_classes, math::argmax(&v))
            }
            KnnMode::Vote => {
                let total: usize = votes.iter().sum();
                ClassProbabilities::from_normalized(
                    votes.iter().map(|&c| c as f64 / total as f64).collect(),
                )
            }
        }
    }
}

pub fn knn_predict(
    train: &Dataset,
    x: &[f64],
    k: usize,
    metric: Metric,
    mode: KnnMode,
) -> Result<ClassProbabilities> {
    KnnModel::fit(train, k, metric, mode)?.predict(x)
}

/// Leave-one-out accuracy: each case is classified by the others.
pub fn knn_leave_one_out_accuracy(train: &Dataset, k: usize, metric: Metric) -> Result<f64> {
    if train.len() < 2 {
        return Err(Error::Validation("leave-one-out needs at least 2 cases".into()));
    }
    let model = KnnModel::fit(train, k.min(train.len() - 1), metric, KnnMode::Crisp)?;
    let hits = train
        .cases
        .iter()
        .enumerate()
        .filter(|(i, x)| model.to_probs(&model.votes(x, Some(*i))).argmax() == train.labels[*i])
        .count();
    Ok(hits as f64 / train.len() as f64)
}

impl Classifier for KnnModel {
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn n_features(&self) -> usize {
        self.cases[0].len()
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        check_dim(self.n_features(), x)?;
        Ok(self.to_probs(&self.votes(x, None)))
    }
    fn is_crisp(&self) -> bool {
        self.mode == KnnMode::Crisp
    }
}
