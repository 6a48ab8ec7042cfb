use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a feature column is interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Real-valued feature with its observed range.
    Continuous { min: f64, max: f64 },
    /// Integer-coded feature; `codes[i]` is the original text of code `i`.
    Categorical { codes: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureMeta {
    pub fn continuous(name: impl Into<String>, min: f64, max: f64) -> Self {
        FeatureMeta {
            name: name.into(),
            kind: FeatureKind::Continuous { min, max },
        }
    }

    pub fn categorical(name: impl Into<String>, codes: Vec<String>) -> Self {
        FeatureMeta {
            name: name.into(),
            kind: FeatureKind::Categorical { codes },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous { .. })
    }

    /// `max - min` for continuous features, `None` for categorical ones.
    pub fn range(&self) -> Option<f64> {
        match self.kind {
            FeatureKind::Continuous { min, max } => Some(max - min),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Continuous { min, max } => Some((min, max)),
            FeatureKind::Categorical { .. } => None,
        }
    }
}

/// A labelled feature matrix. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub class_names: Vec<String>,
    pub features: Vec<FeatureMeta>,
    pub cases: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset and checks every structural invariant.
    pub fn new(
        name: impl Into<String>,
        class_names: Vec<String>,
        features: Vec<FeatureMeta>,
        cases: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            class_names,
            features,
            cases,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset whose continuous ranges are computed from `cases`.
    pub fn with_computed_ranges(
        name: impl Into<String>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
        cases: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let features = feature_names
            .into_iter()
            .enumerate()
            .map(|(j, n)| {
                let (min, max) = column_range(&cases, j);
                FeatureMeta::continuous(n, min, max)
            })
            .collect();
        Dataset::new(name, class_names, features, cases, labels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.len() < 2 {
            return Err(Error::Validation(format!(
                "a dataset needs at least 2 classes, found {}",
                self.class_names.len()
            )));
        }
        if self.cases.len() != self.labels.len() {
            return Err(Error::Validation(format!(
                "{} cases but {} labels",
                self.cases.len(),
                self.labels.len()
            )));
        }
        let n = self.features.len();
        for (i, (x, &y)) in self.cases.iter().zip(&self.labels).enumerate() {
            if x.len() != n {
                return Err(Error::Validation(format!(
                    "case {i} has {} features, expected {n}",
                    x.len()
                )));
            }
            if y >= self.class_names.len() {
                return Err(Error::Validation(format!(
                    "case {i} has label {y} but only {} classes exist",
                    self.class_names.len()
                )));
            }
            if let Some(j) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "case {i} feature {j} is not finite"
                )));
            }
        }
        for (j, f) in self.features.iter().enumerate() {
            match &f.kind {
                FeatureKind::Continuous { min, max } => {
                    if !(min <= max) {
                        return Err(Error::Validation(format!(
                            "feature `{}` has min {min} > max {max}",
                            f.name
                        )));
                    }
                }
                FeatureKind::Categorical { codes } => {
                    for (i, x) in self.cases.iter().enumerate() {
                        let v = x[j];
                        if v.fract() != 0.0 || v < 0.0 || v as usize >= codes.len().max(1) {
                            return Err(Error::Validation(format!(
                                "case {i}: categorical feature `{}` holds invalid code {v}",
                                f.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// Number of cases per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// New dataset holding the given case indices, same metadata.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            class_names: self.class_names.clone(),
            features: self.features.clone(),
            cases: indices.iter().map(|&i| self.cases[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Seeded random train/test partition.
    ///
    /// The test part receives `round(len * test_fraction)` cases. Feature
    /// metadata (including ranges) is inherited from the parent.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test fraction must lie in (0, 1), got {test_fraction}"
            )));
        }
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test >= self.len() {
            return Err(Error::Config(format!(
                "test fraction {test_fraction} leaves an empty split for {} cases",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (test_idx, train_idx) = idx.split_at(n_test);
        let mut train_idx = train_idx.to_vec();
        let mut test_idx = test_idx.to_vec();
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        let mut train = self.subset(&train_idx);
        let mut test = self.subset(&test_idx);
        train.name = format!("{}-train", self.name);
        test.name = format!("{}-test", self.name);
        Ok((train, test))
    }

    /// Indices of continuous features.
    pub fn continuous_features(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&j| self.features[j].is_continuous())
            .collect()
    }
}

pub(crate) fn column_range(cases: &[Vec<f64>], j: usize) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for x in cases {
        min = min.min(x[j]);
        max = max.max(x[j]);
    }
    if cases.is_empty() {
        (0.0, 0.0)
    } else {
        (min, max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let cases = (0..n).map(|i| vec![i as f64, (i * 2) as f64]).collect();
        let labels = (0..n).map(|i| i % 2).collect();
        Dataset::with_computed_ranges(
            "toy",
            vec!["A".into(), "B".into()],
            vec!["f0".into(), "f1".into()],
            cases,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = toy(100);
        let (tr, te) = ds.split(0.3, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (70, 30));
        let (tr2, te2) = ds.split(0.3, 7).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        let mut all: Vec<f64> = tr.cases.iter().chain(&te.cases).map(|x| x[0]).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        assert_eq!(all.len(), 100);
        assert_eq!(tr.class_names, ds.class_names);
    }

    #[test]
    fn split_matches_fixed_test_size() {
        let ds = toy(536);
        let (tr, te) = ds.split(163.0 / 536.0, 1).unwrap();
        assert_eq!(te.len(), 163);
        assert_eq!(tr.len(), 373);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = toy(10);
        assert!(matches!(ds.split(0.0, 1), Err(Error::Config(_))));
        assert!(matches!(ds.split(1.0, 1), Err(Error::Config(_))));
        assert!(matches!(ds.split(0.01, 1), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_single_class_and_bad_labels() {
        let r = Dataset::with_computed_ranges(
            "x",
            vec!["A".into()],
            vec!["f".into()],
            vec![vec![1.0]],
            vec![0],
        );
        assert!(matches!(r, Err(Error::Validation(_))));
        let r = Dataset::with_computed_ranges(
            "x",
            vec!["A".into(), "B".into()],
            vec!["f".into()],
            vec![vec![1.0]],
            vec![2],
        );
        assert!(matches!(r, Err(Error::Validation(_))));
        let r = Dataset::with_computed_ranges(
            "x",
            vec!["A".into(), "B".into()],
            vec!["f".into()],
            vec![vec![1.0], vec![1.0, 2.0]],
            vec![0, 1],
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }
}
