use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{check_dim, ClassProbabilities, Classifier};
use crate::error::{Error, Result};
use crate::math::derive_seed;

/// Samples per independently seeded block. Fixed so results do not depend
/// on the thread count.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_samples: 5000,
            seed: 0,
        }
    }
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Result<Self> {
        let mc = McConfig { n_samples, seed };
        mc.validate()?;
        Ok(mc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub probs: ClassProbabilities,
    /// Per-class standard error of the mean.
    pub stderr: Vec<f64>,
}

/// Averages the model's output over `x + s ⊙ z`, `z ~ N(0, I)`. Features with
/// zero dispersion stay fixed. Crisp models contribute the one-hot vote of
/// each sample. With all dispersions zero the model output is returned as is.
pub fn mc_probabilities<C: Classifier + ?Sized>(model: &C, x: &[f64], s: &[f64], mc: &McConfig) -> Result<McEstimate> {
    mc.validate()?;
    check_dim(model.n_features(), x)?;
    check_dim(model.n_features(), s)?;
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("feature {i} is not finite")));
    }
    if let Some(i) = s.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Config(format!("dispersion of feature {i} must be finite and nonnegative")));
    }
    let k = model.n_classes();
    if s.iter().all(|&v| v == 0.0) {
        return Ok(McEstimate {
            probs: model.predict(x)?,
            stderr: vec![0.0; k],
        });
    }
    let crisp = model.is_crisp();
    let n = mc.n_samples;
    let n_blocks = n.div_ceil(BLOCK);
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(mc.seed, b as u64));
            let mut sum = vec![0.0; k];
            let mut sq = vec![0.0; k];
            let mut y = x.to_vec();
            for _ in b * BLOCK..((b + 1) * BLOCK).min(n) {
                // one draw per feature keeps the noise of each feature
                // independent of which others are perturbed
                for i in 0..x.len() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    y[i] = x[i] + s[i] * z;
                }
                let p = model.predict(&y)?;
                if crisp {
                    let w = p.argmax();
                    sum[w] += 1.0;
                    sq[w] += 1.0;
                } else {
                    for c in 0..k {
                        sum[c] += p[c];
                        sq[c] += p[c] * p[c];
                    }
                }
            }
            Ok((sum, sq))
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for (bs, bq) in &blocks {
        for c in 0..k {
            sum[c] += bs[c];
            sq[c] += bq[c];
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|v| v / nf).collect();
    let stderr = (0..k)
        .map(|c| {
            if n < 2 {
                return 0.0;
            }
            let var = ((sq[c] - nf * mean[c] * mean[c]) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        })
        .collect();
    let total: f64 = mean.iter().sum();
    Ok(McEstimate {
        probs: ClassProbabilities::from_normalized(mean.iter().map(|m| m / total).collect()),
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{Condition, IntervalRuleSet, Rule};

    fn unit_rule() -> IntervalRuleSet {
        IntervalRuleSet::new(2, 1, vec![Rule::new(0, vec![Condition::new(0, 0.0, 1.0)])], 1).unwrap()
    }

    #[test]
    fn zero_dispersion_is_exact() {
        let r = unit_rule();
        let e = mc_probabilities(&r, &[0.5], &[0.0], &McConfig::default()).unwrap();
        assert_eq!(e.probs.as_slice(), &[1.0, 0.0]);
        assert_eq!(e.stderr, vec![0.0, 0.0]);
    }

    #[test]
    fn deterministic_per_seed() {
        let r = unit_rule();
        let mc = McConfig::new(3000, 7).unwrap();
        let a = mc_probabilities(&r, &[0.9], &[0.2], &mc).unwrap();
        let b = mc_probabilities(&r, &[0.9], &[0.2], &mc).unwrap();
        assert_eq!(a, b);
        let c = mc_probabilities(&r, &[0.9], &[0.2], &McConfig::new(3000, 8).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_input() {
        let r = unit_rule();
        assert!(mc_probabilities(&r, &[f64::NAN], &[0.1], &McConfig::default()).is_err());
        assert!(mc_probabilities(&r, &[0.5], &[-0.1], &McConfig::default()).is_err());
        assert!(mc_probabilities(&r, &[0.5, 1.0], &[0.1, 0.1], &McConfig::default()).is_err());
        assert!(McConfig::new(0, 1).is_err());
    }

    #[test]
    fn border_case_is_even() {
        let r = unit_rule();
        let e = mc_probabilities(&r, &[1.0], &[0.2], &McConfig::new(100_000, 3).unwrap()).unwrap();
        assert!((e.probs[0] - 0.5).abs() <= 3.0 * e.stderr[0]);
    }
}
