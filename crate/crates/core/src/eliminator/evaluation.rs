//! Dataset-level scoring of eliminators: rejection curves, the relaxed
//! top-k criterion, confidently wrong cases and confused class pairs.

use serde::{Deserialize, Serialize};

use super::policy::EliminationVerdict;
use crate::classifiers::{predict_all, ClassProbabilities, Classifier};
use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionPoint {
    pub threshold: f64,
    pub rejection_rate: f64,
    /// Accuracy on retained cases; `None` when every case was rejected.
    pub accuracy: Option<f64>,
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config("rejection thresholds must lie in [0, 1]".into()));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("rejection thresholds must be strictly increasing".into()));
    }
    Ok(())
}

/// Curve over `(confidence, correct)` pairs: a case is rejected at `t` iff
/// its confidence is below `t`.
pub fn rejection_curve_from(outcomes: &[(f64, bool)], thresholds: &[f64]) -> Result<Vec<RejectionPoint>> {
    check_thresholds(thresholds)?;
    let total = outcomes.len();
    if total == 0 {
        return Err(Error::Validation("rejection curve needs at least one case".into()));
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let (kept, hits) = outcomes
                .iter()
                .filter(|(conf, _)| *conf >= t)
                .fold((0usize, 0usize), |(k, h), &(_, ok)| (k + 1, h + usize::from(ok)));
            RejectionPoint {
                threshold: t,
                rejection_rate: (total - kept) as f64 / total as f64,
                accuracy: (kept > 0).then(|| hits as f64 / kept as f64),
            }
        })
        .collect())
}

pub fn outcomes(probs: &[ClassProbabilities], labels: &[usize]) -> Vec<(f64, bool)> {
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| (p.max(), p.argmax() == y))
        .collect()
}

pub fn rejection_curve<C: Classifier + ?Sized>(
    model: &C,
    data: &Dataset,
    thresholds: &[f64],
) -> Result<Vec<RejectionPoint>> {
    let probs = predict_all(model, data)?;
    rejection_curve_from(&outcomes(&probs, &data.labels), thresholds)
}

/// Fraction of cases whose true class is among the `k` most probable.
pub fn relaxed_accuracy_from(probs: &[ClassProbabilities], labels: &[usize], k: usize) -> Result<f64> {
    let n_classes = probs.first().map_or(0, |p| p.len());
    if k == 0 || k > n_classes {
        return Err(Error::Config(format!("k must lie in 1..={n_classes}, got {k}")));
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, y)| p.ranked()[..k].contains(y))
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

pub fn relaxed_accuracy<C: Classifier + ?Sized>(model: &C, data: &Dataset, k: usize) -> Result<f64> {
    relaxed_accuracy_from(&predict_all(model, data)?, &data.labels, k)
}

/// How a top-k prediction is scored when some of its runner-up classes fall
/// below the probability floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubThresholdRule {
    /// Sub-threshold runner-ups are dropped; the prediction shrinks.
    Singleton,
    /// A prediction that cannot fill `k` slots above the floor counts as a miss.
    Miss,
}

/// Relaxed top-k accuracy where classes after the first must reach `floor`.
pub fn relaxed_accuracy_thresholded(
    probs: &[ClassProbabilities],
    labels: &[usize],
    k: usize,
    floor: f64,
    rule: SubThresholdRule,
) -> Result<f64> {
    let n_classes = probs.first().map_or(0, |p| p.len());
    if k == 0 || k > n_classes {
        return Err(Error::Config(format!("k must lie in 1..={n_classes}, got {k}")));
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, y)| {
            let ranked = p.ranked();
            let kept: Vec<usize> = std::iter::once(ranked[0])
                .chain(ranked[1..k].iter().copied().filter(|&c| p[c] >= floor))
                .collect();
            match rule {
                SubThresholdRule::Singleton => kept.contains(y),
                SubThresholdRule::Miss => kept.len() == k && kept.contains(y),
            }
        })
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

/// Fraction of verdicts whose retained set holds the true class.
pub fn verdict_accuracy(verdicts: &[EliminationVerdict], labels: &[usize]) -> f64 {
    let hits = verdicts.iter().zip(labels).filter(|(v, &y)| v.retains(y)).count();
    hits as f64 / verdicts.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighConfidenceErrors {
    pub count: usize,
    pub fraction: f64,
}

pub fn high_confidence_errors_from(probs: &[ClassProbabilities], labels: &[usize], threshold: f64) -> Result<HighConfidenceErrors> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let count = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| p.argmax() != y && p.max() >= threshold)
        .count();
    Ok(HighConfidenceErrors {
        count,
        fraction: count as f64 / probs.len().max(1) as f64,
    })
}

/// Misclassified cases whose top probability reaches `threshold`.
pub fn high_confidence_errors<C: Classifier + ?Sized>(
    model: &C,
    data: &Dataset,
    threshold: f64,
) -> Result<HighConfidenceErrors> {
    high_confidence_errors_from(&predict_all(model, data)?, &data.labels, threshold)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusedPair {
    pub first: usize,
    pub second: usize,
    /// `F[i][j] + F[j][i]`
    pub score: u64,
}

/// Class pairs ranked by how often they are mixed up, most confused first;
/// equal scores keep index order.
pub fn confused_pairs(cm: &ConfusionMatrix) -> Vec<ConfusedPair> {
    let k = cm.n_classes();
    let mut pairs: Vec<ConfusedPair> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .map(|(i, j)| ConfusedPair {
            first: i,
            second: j,
            score: cm.get(i, j) + cm.get(j, i),
        })
        .collect();
    pairs.sort_by(|a, b| b.score.cmp(&a.score).then((a.first, a.second).cmp(&(b.first, b.second))));
    pairs
}
