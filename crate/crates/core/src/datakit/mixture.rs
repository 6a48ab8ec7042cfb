//! Gaussian class-conditional mixtures with a shared covariance, and their
//! closed-form Bayes posteriors. These serve as synthetic ground truth.

use nalgebra::{DMatrix, DVector};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classifiers::ClassProbabilities;
use crate::datakit::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    /// One mean vector per class.
    pub means: Vec<Vec<f64>>,
    /// Shared covariance, row-major N x N.
    pub covariance: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    pub seed: u64,
    /// Optional class names; defaults to `C1..CK`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

impl GaussianMixtureSpec {
    /// Mixture with identity covariance and equal priors.
    pub fn isotropic(means: Vec<Vec<f64>>, variance: f64, seed: u64) -> Self {
        let n = means.first().map_or(0, Vec::len);
        let k = means.len();
        let covariance = (0..n)
            .map(|i| (0..n).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        GaussianMixtureSpec {
            means,
            covariance,
            priors: vec![1.0 / k as f64; k],
            seed,
            class_names: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.covariance.len()
    }

    pub fn n_classes(&self) -> usize {
        self.means.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.class_names
            .clone()
            .unwrap_or_else(|| (1..=self.n_classes()).map(|i| format!("C{i}")).collect())
    }

    /// Checks shapes and priors, then prepares the factorized form.
    pub fn prepare(&self) -> Result<PreparedMixture> {
        let k = self.means.len();
        let n = self.covariance.len();
        if k < 2 {
            return Err(Error::Validation("a mixture needs at least 2 classes".into()));
        }
        if self.priors.len() != k {
            return Err(Error::Validation(format!(
                "{} priors for {k} classes",
                self.priors.len()
            )));
        }
        if let Some(names) = &self.class_names {
            if names.len() != k {
                return Err(Error::Validation(format!("{} class names for {k} classes", names.len())));
            }
        }
        if self.priors.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Validation("priors must be finite and nonnegative".into()));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("priors sum to {total}, not 1")));
        }
        if n == 0 || self.covariance.iter().any(|r| r.len() != n) {
            return Err(Error::Validation("covariance must be a non-empty square matrix".into()));
        }
        for m in &self.means {
            if m.len() != n {
                return Err(Error::Dimension { expected: n, got: m.len() });
            }
        }
        let cov = DMatrix::from_fn(n, n, |i, j| self.covariance[i][j]);
        for i in 0..n {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs()) {
                    return Err(Error::Validation("covariance is not symmetric".into()));
                }
            }
        }
        let chol = crate::math::covariance_cholesky(cov.clone())?;
        let precision = chol.inverse();
        let means: Vec<DVector<f64>> = self.means.iter().map(|m| DVector::from_column_slice(m)).collect();
        Ok(PreparedMixture {
            lower: chol.l(),
            precision,
            means,
            log_priors: self.priors.iter().map(|p| p.ln()).collect(),
        })
    }
}

/// Factorized mixture, ready for sampling and posterior evaluation.
#[derive(Debug, Clone)]
pub struct PreparedMixture {
    lower: DMatrix<f64>,
    precision: DMatrix<f64>,
    means: Vec<DVector<f64>>,
    log_priors: Vec<f64>,
}

impl PreparedMixture {
    /// Unnormalized log joint `ln p(x|C_k) + ln P(C_k)` up to a constant shared by all classes.
    pub fn log_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.precision.nrows();
        if x.len() != n {
            return Err(Error::Dimension { expected: n, got: x.len() });
        }
        let x = DVector::from_column_slice(x);
        Ok(self
            .means
            .iter()
            .zip(&self.log_priors)
            .map(|(m, lp)| {
                let d = &x - m;
                -0.5 * d.dot(&(&self.precision * &d)) + lp
            })
            .collect())
    }

    pub fn posterior(&self, x: &[f64]) -> Result<ClassProbabilities> {
        let lj = self.log_joint(x)?;
        Ok(ClassProbabilities::from_log_scores(&lj))
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn log_priors(&self) -> &[f64] {
        &self.log_priors
    }
}

/// Exact posterior `P(C_k) p(x|C_k) / sum_i P(C_i) p(x|C_i)`.
pub fn bayes_posterior(spec: &GaussianMixtureSpec, x: &[f64]) -> Result<ClassProbabilities> {
    spec.prepare()?.posterior(x)
}

/// Draws `n` labelled cases. Deterministic under `spec.seed`.
pub fn sample_mixture(spec: &GaussianMixtureSpec, n: usize) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("cannot sample zero cases".into()));
    }
    let prepared = spec.prepare()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let classes = WeightedIndex::new(&spec.priors)
        .map_err(|e| Error::Validation(format!("invalid priors: {e}")))?;
    let dim = spec.dim();
    let mut cases = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = classes.sample(&mut rng);
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &prepared.means[k] + &prepared.lower * z;
        cases.push(x.iter().copied().collect());
        labels.push(k);
    }
    Dataset::with_computed_ranges(
        "mixture",
        spec.names(),
        (0..dim).map(|j| format!("x{j}")).collect(),
        cases,
        labels,
    )
}
