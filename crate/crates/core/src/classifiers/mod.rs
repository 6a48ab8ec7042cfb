//! Classifier zoo: crisp interval rules, kNN, LDA with a logistic output,
//! a one-hidden-layer softmax MLP, committees, and the exact Bayes rule of a
//! Gaussian mixture. Everything speaks [`ClassProbabilities`].

mod bayes;
mod committee;
mod knn;
mod lda;
mod mlp;
mod risk;
mod rules;
mod train;

use std::ops::{Deref, Index};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datakit::{load_document, save_document, Dataset, FeatureMeta};
use crate::error::{Error, Result};
use crate::math;

pub use bayes::BayesModel;
pub use committee::{committee_predict, committee_train, Committee};
pub use knn::{knn_leave_one_out_accuracy, knn_predict, KnnMode, KnnModel, Metric};
pub use lda::{train_lda, train_lda_with_ridge, tune_lda_slope, LinearLogisticModel};
pub use mlp::{MlpGradient, MlpModel};
pub use risk::{risk_weighted_loss, RiskMatrix};
pub use rules::{rules_predict, Condition, IntervalRuleSet, Rule};
pub use train::{
    mlp_objective, train_joint, train_mlp, EpochRecord, ErrorFunction, TrainConfig, TrainLog,
};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Normalized probabilities over K classes for one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassProbabilities(Vec<f64>);

impl ClassProbabilities {
    /// Validates entries in `[0, 1]` summing to one within [`SUM_TOLERANCE`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("empty probability vector".into()));
        }
        if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation(format!("probabilities out of [0, 1]: {values:?}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Validation(format!("probabilities sum to {sum}")));
        }
        Ok(ClassProbabilities(values))
    }

    pub fn one_hot(k: usize, class: usize) -> Self {
        let mut v = vec![0.0; k];
        v[class] = 1.0;
        ClassProbabilities(v)
    }

    pub fn uniform(k: usize) -> Self {
        ClassProbabilities(vec![1.0 / k as f64; k])
    }

    /// Softmax of unnormalized log scores; `-inf` entries become exact zeros.
    pub fn from_log_scores(scores: &[f64]) -> Self {
        ClassProbabilities(math::softmax(scores))
    }

    /// Normalizes nonnegative scores; `None` when they are all zero.
    pub fn from_scores(scores: &[f64]) -> Option<Self> {
        let total: f64 = scores.iter().sum();
        if total > 0.0 {
            Some(ClassProbabilities(scores.iter().map(|s| s / total).collect()))
        } else {
            None
        }
    }

    /// Trusted construction for internally normalized values.
    pub(crate) fn from_normalized(values: Vec<f64>) -> Self {
        ClassProbabilities(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        math::argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// Classes ordered by decreasing probability, ties by index.
    pub fn ranked(&self) -> Vec<usize> {
        math::ranked_indices(&self.0)
    }

    /// True when the top class beats the runner-up by more than `tol`.
    pub fn has_unique_argmax(&self, tol: f64) -> bool {
        let r = self.ranked();
        r.len() < 2 || self.0[r[0]] - self.0[r[1]] > tol
    }
}

impl Deref for ClassProbabilities {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ClassProbabilities {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ClassProbabilities {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ClassProbabilities::new(v)
    }
}

impl From<ClassProbabilities> for Vec<f64> {
    fn from(p: ClassProbabilities) -> Vec<f64> {
        p.0
    }
}

/// Anything mapping a feature vector to class probabilities.
pub trait Classifier: Send + Sync {
    fn n_classes(&self) -> usize;
    fn n_features(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities>;
    /// Crisp classifiers emit one-hot outputs only.
    fn is_crisp(&self) -> bool {
        false
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        (**self).predict(x)
    }
    fn is_crisp(&self) -> bool {
        (**self).is_crisp()
    }
}

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        Err(Error::Dimension {
            expected,
            got: x.len(),
        })
    } else {
        Ok(())
    }
}

/// Any supported classifier, as stored in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Model {
    Rules(IntervalRuleSet),
    Knn(KnnModel),
    Lda(LinearLogisticModel),
    Mlp(MlpModel),
    Committee(Committee),
    Bayes(BayesModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Rules(_) => "rules",
            Model::Knn(_) => "knn",
            Model::Lda(_) => "lda",
            Model::Mlp(_) => "mlp",
            Model::Committee(_) => "committee",
            Model::Bayes(_) => "bayes",
        }
    }

    /// Checks internal consistency of parameters loaded from outside.
    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Mlp(m) => m.validate(),
            Model::Committee(c) => c.members().iter().try_for_each(Model::validate),
            _ => Ok(()),
        }
    }

    fn inner(&self) -> &dyn Classifier {
        match self {
            Model::Rules(m) => m,
            Model::Knn(m) => m,
            Model::Lda(m) => m,
            Model::Mlp(m) => m,
            Model::Committee(m) => m,
            Model::Bayes(m) => m,
        }
    }
}

impl Classifier for Model {
    fn n_classes(&self) -> usize {
        self.inner().n_classes()
    }
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        self.inner().predict(x)
    }
    fn is_crisp(&self) -> bool {
        self.inner().is_crisp()
    }
}

/// A classifier together with the class names and feature metadata it was
/// built for. This is the unit persisted to model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub class_names: Vec<String>,
    pub features: Vec<FeatureMeta>,
    #[serde(flatten)]
    pub model: Model,
}

impl TrainedModel {
    pub fn new(class_names: Vec<String>, features: Vec<FeatureMeta>, model: Model) -> Result<Self> {
        let tm = TrainedModel {
            class_names,
            features,
            model,
        };
        tm.validate()?;
        Ok(tm)
    }

    /// Wraps `model`, taking class names and features from `data`.
    pub fn for_dataset(data: &Dataset, model: Model) -> Result<Self> {
        TrainedModel::new(data.class_names.clone(), data.features.clone(), model)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.model.n_classes() != self.class_names.len() {
            return Err(Error::ClassMismatch(format!(
                "model has {} outputs but {} class names",
                self.model.n_classes(),
                self.class_names.len()
            )));
        }
        if self.model.n_features() != self.features.len() {
            return Err(Error::Dimension {
                expected: self.features.len(),
                got: self.model.n_features(),
            });
        }
        if let Model::Rules(rules) = &self.model {
            rules.check_features(&self.features)?;
        }
        Ok(())
    }

    /// Fails unless `data` uses the same classes and feature count.
    pub fn check_compatible(&self, data: &Dataset) -> Result<()> {
        if self.class_names != data.class_names {
            return Err(Error::ClassMismatch(format!(
                "model classes {:?} differ from data classes {:?}",
                self.class_names, data.class_names
            )));
        }
        if data.n_features() != self.features.len() {
            return Err(Error::Dimension {
                expected: self.features.len(),
                got: data.n_features(),
            });
        }
        Ok(())
    }
}

impl Classifier for TrainedModel {
    fn n_classes(&self) -> usize {
        self.model.n_classes()
    }
    fn n_features(&self) -> usize {
        self.model.n_features()
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        self.model.predict(x)
    }
    fn is_crisp(&self) -> bool {
        self.model.is_crisp()
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    save_document(path, model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let m: TrainedModel = load_document(path)?;
    m.validate()?;
    Ok(m)
}

/// Probabilities for every case of `data`.
pub fn predict_all<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<Vec<ClassProbabilities>> {
    data.cases.iter().map(|x| model.predict(x)).collect()
}

/// Fraction of cases whose most probable class is the true one.
pub fn accuracy<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<f64> {
    let probs = predict_all(model, data)?;
    let hits = probs
        .iter()
        .zip(&data.labels)
        .filter(|(p, &y)| p.argmax() == y)
        .count();
    Ok(hits as f64 / data.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_validate() {
        assert!(ClassProbabilities::new(vec![0.5, 0.5]).is_ok());
        assert!(ClassProbabilities::new(vec![0.5, 0.6]).is_err());
        assert!(ClassProbabilities::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassProbabilities::new(vec![]).is_err());
        let p: std::result::Result<ClassProbabilities, _> = serde_json::from_str("[0.2, 0.2]");
        assert!(p.is_err());
    }

    #[test]
    fn trained_model_round_trip_and_validation() {
        let rules = IntervalRuleSet::new(2, 1, vec![Rule::new(0, vec![Condition::at_most(0, 0.5)])], 1).unwrap();
        let tm = TrainedModel::new(
            vec!["A".into(), "B".into()],
            vec![FeatureMeta::continuous("x", 0.0, 1.0)],
            Model::Rules(rules),
        )
        .unwrap();
        let json = serde_json::to_value(&tm).unwrap();
        assert_eq!(json["kind"], "rules");
        assert_eq!(json["params"]["rules"][0]["conditions"][0]["a"], "-inf");
        let back: TrainedModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, tm);

        let mut bad = serde_json::to_value(&tm).unwrap();
        bad["class_names"] = serde_json::json!(["A", "B", "C"]);
        let bad: TrainedModel = serde_json::from_value(bad).unwrap();
        assert!(matches!(bad.validate(), Err(Error::ClassMismatch(_))));
    }

    #[test]
    fn unique_argmax_detection() {
        let p = ClassProbabilities::new(vec![0.5, 0.5]).unwrap();
        assert!(!p.has_unique_argmax(1e-9));
        let p = ClassProbabilities::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert!(p.has_unique_argmax(1e-9));
        assert_eq!(p.ranked(), vec![1, 2, 0]);
    }
}
