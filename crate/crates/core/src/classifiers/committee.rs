use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{train_mlp, TrainConfig, TrainLog};
use super::{ClassProbabilities, Classifier, Model};
use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::math::derive_seed;

/// Arithmetic mean of member probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCommittee")]
pub struct Committee {
    members: Vec<Model>,
}

#[derive(Deserialize)]
struct RawCommittee {
    members: Vec<Model>,
}

impl TryFrom<RawCommittee> for Committee {
    type Error = Error;
    fn try_from(r: RawCommittee) -> Result<Self> {
        Committee::new(r.members)
    }
}

impl Committee {
    pub fn new(members: Vec<Model>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Validation("a committee needs at least one member".into()))?;
        let (k, n) = (first.n_classes(), first.n_features());
        if members.iter().any(|m| m.n_classes() != k || m.n_features() != n) {
            return Err(Error::ClassMismatch("committee members disagree on classes or features".into()));
        }
        Ok(Committee { members })
    }

    pub fn members(&self) -> &[Model] {
        &self.members
    }
}

/// Trains `members` MLPs whose seeds are derived from `cfg.seed` and the
/// member index, so the result does not depend on scheduling.
pub fn committee_train(
    train: &Dataset,
    members: usize,
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(Committee, Vec<TrainLog>)> {
    if members == 0 {
        return Err(Error::Config("a committee needs at least one member".into()));
    }
    let trained: Vec<_> = (0..members)
        .into_par_iter()
        .map(|j| {
            let member_cfg = TrainConfig {
                seed: derive_seed(cfg.seed, j as u64),
                ..cfg.clone()
            };
            train_mlp(train, hidden, &member_cfg)
        })
        .collect::<Result<_>>()?;
    let (models, logs): (Vec<_>, Vec<_>) = trained.into_iter().map(|(m, l)| (Model::Mlp(m), l)).unzip();
    Ok((Committee::new(models)?, logs))
}

pub fn committee_predict(c: &Committee, x: &[f64]) -> Result<ClassProbabilities> {
    let mut acc = vec![0.0; c.n_classes()];
    for m in &c.members {
        for (a, p) in acc.iter_mut().zip(m.predict(x)?.iter()) {
            *a += p;
        }
    }
    let n = c.members.len() as f64;
    Ok(ClassProbabilities::from_normalized(acc.into_iter().map(|a| a / n).collect()))
}

impl Classifier for Committee {
    fn n_classes(&self) -> usize {
        self.members[0].n_classes()
    }
    fn n_features(&self) -> usize {
        self.members[0].n_features()
    }
    fn predict(&self, x: &[f64]) -> Result<ClassProbabilities> {
        committee_predict(self, x)
    }
}
