use serde::{Deserialize, Serialize};

use super::{ClassProbabilities, Classifier};
use crate::datakit::{GaussianMixtureSpec, PreparedMixture};
use crate::error::{Error, Result};

/// The exact Bayes classifier of a known Gaussian mixture. Used as a
/// reference model with calibrated probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GaussianMixtureSpec", into = "GaussianMixtureSpec")]
pub struct BayesModel {
    spec: GaussianMixtureSpec,
    prepared: PreparedMixture,
}

impl BayesModel {
    pub fn new(spec: GaussianMixtureSpec) -> Result<Self> {
        let prepared = spec.prepare()?;
        Ok(BayesModel { spec, prepared })
    }

    pub fn spec(&self) -> &GaussianMixtureSpec {
        &self.spec
    }
}

impl PartialEq for BayesModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl TryFrom<GaussianMixtureSpec> for BayesModel {
    type Error = Error;
    fn try_from(spec: GaussianMixtureSpec) -> Result<Self> {
        BayesModel::new(spec)
    }
}

impl From<BayesModel> for GaussianMixtureSpec {
    fn from(m: BayesModel) -> Self {
        m.spec
    }
}

impl Classifier for BayesModel {
    fn n_classes(&self) -> usize {
        self.spec.n_classes()
    }
    fn n_features(&self) -> usize {
        self.spec.dim()
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        self.prepared.posterior(x)
    }
}
