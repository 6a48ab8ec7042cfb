use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datakit::FeatureMeta;
use crate::error::{Error, Result};

/// Features sharing their own uncertainty factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub features: Vec<usize>,
    pub rho: f64,
}

/// How much each input is assumed to be uncertain. A feature's dispersion is
/// its explicit override if present, else its range times its group's factor,
/// else its range times the global `rho`. Categorical features never vary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct UncertaintyProfile {
    pub rho: f64,
    /// Dispersions in feature units, keyed by feature index.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<FeatureGroup>,
}

#[derive(Deserialize)]
struct RawProfile {
    rho: f64,
    #[serde(default)]
    overrides: BTreeMap<usize, f64>,
    #[serde(default)]
    groups: Vec<FeatureGroup>,
}

impl TryFrom<RawProfile> for UncertaintyProfile {
    type Error = Error;
    fn try_from(r: RawProfile) -> Result<Self> {
        let p = UncertaintyProfile {
            rho: r.rho,
            overrides: r.overrides,
            groups: r.groups,
        };
        p.validate()?;
        Ok(p)
    }
}

fn check_nonneg(what: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be a finite nonnegative number, got {v}")))
    }
}

impl UncertaintyProfile {
    pub fn new(rho: f64) -> Result<Self> {
        check_nonneg("rho", rho)?;
        Ok(UncertaintyProfile {
            rho,
            ..Default::default()
        })
    }

    /// Profile with every listed dispersion given explicitly.
    pub fn from_dispersions(s: &[f64]) -> Result<Self> {
        let mut p = UncertaintyProfile::default();
        for (i, &v) in s.iter().enumerate() {
            p = p.with_override(i, v)?;
        }
        Ok(p)
    }

    pub fn with_override(mut self, feature: usize, s: f64) -> Result<Self> {
        check_nonneg("dispersion override", s)?;
        self.overrides.insert(feature, s);
        Ok(self)
    }

    pub fn with_group(mut self, name: impl Into<String>, features: Vec<usize>, rho: f64) -> Result<Self> {
        self.groups.push(FeatureGroup {
            name: name.into(),
            features,
            rho,
        });
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("rho", self.rho)?;
        for &s in self.overrides.values() {
            check_nonneg("dispersion override", s)?;
        }
        let mut seen = BTreeMap::new();
        for g in &self.groups {
            check_nonneg(&format!("rho of group `{}`", g.name), g.rho)?;
            for &f in &g.features {
                if let Some(other) = seen.insert(f, &g.name) {
                    return Err(Error::Config(format!(
                        "feature {f} belongs to groups `{other}` and `{}`",
                        g.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn group_rho(&self, feature: usize) -> Option<f64> {
        self.groups
            .iter()
            .find(|g| g.features.contains(&feature))
            .map(|g| g.rho)
    }

    fn check_indices(&self, n: usize) -> Result<()> {
        let bad = self
            .overrides
            .keys()
            .chain(self.groups.iter().flat_map(|g| g.features.iter()))
            .find(|&&f| f >= n);
        match bad {
            Some(&f) => Err(Error::Dimension { expected: n, got: f + 1 }),
            None => Ok(()),
        }
    }
}

/// Per-feature standard deviations of the input perturbation.
pub fn dispersions(profile: &UncertaintyProfile, features: &[FeatureMeta]) -> Result<Vec<f64>> {
    profile.validate()?;
    profile.check_indices(features.len())?;
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let Some(range) = f.range() else {
                if profile.overrides.get(&i).is_some_and(|&s| s > 0.0) {
                    return Err(Error::Config(format!("categorical feature `{}` cannot be perturbed", f.name)));
                }
                return Ok(0.0);
            };
            Ok(match profile.overrides.get(&i) {
                Some(&s) => s,
                None => range * profile.group_rho(i).unwrap_or(profile.rho),
            })
        })
        .collect()
}

/// `d s_i / d rho`: the feature range where the global factor applies, else 0.
pub fn dispersion_rho_derivative(profile: &UncertaintyProfile, features: &[FeatureMeta]) -> Vec<f64> {
    features
        .iter()
        .enumerate()
        .map(|(i, f)| match f.range() {
            Some(range) if !profile.overrides.contains_key(&i) && profile.group_rho(i).is_none() => range,
            _ => 0.0,
        })
        .collect()
}
