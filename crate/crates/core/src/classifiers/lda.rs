//! Two-class linear discriminant with a logistic output unit.
//!
//! For Gaussian classes sharing a covariance `S`, the log posterior ratio is
//! linear: `ln p(C1|x)/p(C2|x) = w·x - theta` with `w = S^-1 (m1 - m2)` and
//! `theta = ½ (m1ᵀ S^-1 m1 - m2ᵀ S^-1 m2) - ln(P1/P2)`. Only the slope of the
//! logistic is left free.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_dim, ClassProbabilities, Classifier};
use crate::datakit::{Dataset, GaussianMixtureSpec};
use crate::error::{Error, Result};
use crate::math::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLogisticModel {
    pub w: Vec<f64>,
    pub theta: f64,
    pub slope: f64,
}

impl LinearLogisticModel {
    pub fn new(w: Vec<f64>, theta: f64, slope: f64) -> Result<Self> {
        if !(slope > 0.0) || !slope.is_finite() {
            return Err(Error::Config(format!("slope must be positive and finite, got {slope}")));
        }
        if w.is_empty() || w.iter().any(|v| !v.is_finite()) || !theta.is_finite() {
            return Err(Error::Validation("weights and threshold must be finite".into()));
        }
        Ok(LinearLogisticModel { w, theta, slope })
    }

    /// Exact Bayes discriminant of a two-class shared-covariance mixture.
    pub fn from_gaussian(spec: &GaussianMixtureSpec) -> Result<Self> {
        if spec.n_classes() != 2 {
            return Err(Error::Validation("a linear discriminant needs exactly 2 classes".into()));
        }
        let prepared = spec.prepare()?;
        let m = prepared.means();
        let lp = prepared.log_priors();
        if !lp.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("both priors must be positive".into()));
        }
        Self::from_moments(&m[0], &m[1], prepared.precision(), lp[0] - lp[1], 1.0)
    }

    fn from_moments(
        m1: &DVector<f64>,
        m2: &DVector<f64>,
        precision: &DMatrix<f64>,
        log_prior_ratio: f64,
        slope: f64,
    ) -> Result<Self> {
        let w = precision * (m1 - m2);
        let theta = 0.5 * (m1.dot(&(precision * m1)) - m2.dot(&(precision * m2))) - log_prior_ratio;
        LinearLogisticModel::new(w.iter().copied().collect(), theta, slope)
    }

    /// Activation `w·x - theta` before the slope is applied.
    pub fn discriminant(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() - self.theta
    }

    pub fn with_slope(&self, slope: f64) -> Result<Self> {
        LinearLogisticModel::new(self.w.clone(), self.theta, slope)
    }
}

impl Classifier for LinearLogisticModel {
    fn n_classes(&self) -> usize {
        2
    }
    fn n_features(&self) -> usize {
        self.w.len()
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        check_dim(self.w.len(), x)?;
        let z = self.slope * self.discriminant(x);
        // both entries computed directly to keep tails accurate
        Ok(ClassProbabilities::from_normalized(vec![sigmoid(z), sigmoid(-z)]))
    }
}

/// Fits the discriminant with pooled within-class covariance and class
/// frequencies as priors.
pub fn train_lda(train: &Dataset, slope: f64) -> Result<LinearLogisticModel> {
    train_lda_with_ridge(train, slope, 0.0)
}

/// As [`train_lda`], adding `ridge` to the covariance diagonal.
pub fn train_lda_with_ridge(train: &Dataset, slope: f64, ridge: f64) -> Result<LinearLogisticModel> {
    if train.n_classes() != 2 {
        return Err(Error::Validation(format!(
            "LDA with a logistic output needs 2 classes, found {}",
            train.n_classes()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge must be nonnegative, got {ridge}")));
    }
    let n = train.n_features();
    let counts = train.class_counts();
    if counts.iter().any(|&c| c == 0) || train.len() < 3 {
        return Err(Error::Validation("each class needs cases, and at least 3 cases overall".into()));
    }
    let mut means = [DVector::zeros(n), DVector::zeros(n)];
    for (x, &y) in train.cases.iter().zip(&train.labels) {
        means[y] += DVector::from_column_slice(x);
    }
    for (m, &c) in means.iter_mut().zip(&counts) {
        *m /= c as f64;
    }
    let mut scatter = DMatrix::zeros(n, n);
    for (x, &y) in train.cases.iter().zip(&train.labels) {
        let d = DVector::from_column_slice(x) - &means[y];
        scatter += &d * d.transpose();
    }
    let mut cov = scatter / (train.len() - 2) as f64;
    for i in 0..n {
        cov[(i, i)] += ridge;
    }
    let precision = crate::math::covariance_cholesky(cov)?.inverse();
    let log_prior_ratio = (counts[0] as f64 / counts[1] as f64).ln();
    LinearLogisticModel::from_moments(&means[0], &means[1], &precision, log_prior_ratio, slope)
}

/// Keeps `w` and `theta` fixed and picks the slope minimizing the mean
/// cross-entropy on `data` (Newton's method; the objective is convex in the
/// slope). The result is clamped to `[1e-6, 1e6]`.
pub fn tune_lda_slope(model: &LinearLogisticModel, data: &Dataset) -> Result<LinearLogisticModel> {
    if data.n_classes() != 2 || data.is_empty() {
        return Err(Error::Validation("slope tuning needs non-empty 2-class data".into()));
    }
    let signed: Vec<f64> = data
        .cases
        .iter()
        .zip(&data.labels)
        .map(|(x, &y)| {
            let u = model.discriminant(x);
            if y == 0 {
                u
            } else {
                -u
            }
        })
        .collect();
    let n = signed.len() as f64;
    let mut s = model.slope;
    for _ in 0..200 {
        let (mut g, mut h) = (0.0, 0.0);
        for &v in &signed {
            let q = sigmoid(-s * v);
            g -= v * q;
            h += v * v * q * (1.0 - q);
        }
        g /= n;
        h /= n;
        let step = if h > 1e-300 { g / h } else { -s };
        let next = (s - step).clamp(1e-6, 1e6);
        if (next - s).abs() <= 1e-12 * s.max(1.0) {
            s = next;
            break;
        }
        s = next;
    }
    model.with_slope(s)
}
