use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mc::{mc_probabilities, McConfig, McEstimate};
use super::profile::{dispersions, UncertaintyProfile};
use crate::classifiers::{ClassProbabilities, Classifier};
use crate::datakit::FeatureMeta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub abscissa: f64,
    pub probs: ClassProbabilities,
    pub stderr: Vec<f64>,
}

/// Class probabilities along a grid of uncertainty levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    /// `"rho"` or the swept feature's name.
    pub parameter: String,
    pub rows: Vec<SweepRow>,
    /// Grid point reached by the largest total-variation change from its
    /// predecessor; `None` for a single-point grid.
    pub max_change_at: Option<f64>,
}

impl SweepCurve {
    fn build(parameter: String, grid: &[f64], estimates: Vec<McEstimate>) -> Self {
        let rows: Vec<SweepRow> = grid
            .iter()
            .zip(estimates)
            .map(|(&abscissa, e)| SweepRow {
                abscissa,
                probs: e.probs,
                stderr: e.stderr,
            })
            .collect();
        let mut max_change_at = None;
        let mut largest = f64::NEG_INFINITY;
        for w in rows.windows(2) {
            let tv = 0.5
                * w[0]
                    .probs
                    .iter()
                    .zip(w[1].probs.iter())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
            if tv > largest {
                largest = tv;
                max_change_at = Some(w[1].abscissa);
            }
        }
        SweepCurve {
            parameter,
            rows,
            max_change_at,
        }
    }

    pub fn abscissa(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.abscissa).collect()
    }

    /// Columns: abscissa, one probability per class, one standard error per
    /// class.
    pub fn write_csv<W: Write>(&self, class_names: &[String], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Corrupt(format!("csv write failed: {e}"));
        let mut header = vec![self.parameter.clone()];
        header.extend(class_names.iter().map(|c| format!("p_{c}")));
        header.extend(class_names.iter().map(|c| format!("se_{c}")));
        w.write_record(&header).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![format!("{:?}", r.abscissa)];
            rec.extend(r.probs.iter().map(|v| format!("{v:?}")));
            rec.extend(r.stderr.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Corrupt(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if grid.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Config("sweep grid values must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("sweep grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Probabilities at each global `rho` of the grid. Every point reuses the
/// same seed, so the curve reflects the change in `rho` rather than
/// sampling noise.
pub fn rho_sweep<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    features: &[FeatureMeta],
    rho_grid: &[f64],
    mc: &McConfig,
) -> Result<SweepCurve> {
    check_grid(rho_grid)?;
    let estimates = rho_grid
        .par_iter()
        .map(|&rho| {
            let s = dispersions(&UncertaintyProfile::new(rho)?, features)?;
            mc_probabilities(model, x, &s, mc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve::build("rho".into(), rho_grid, estimates))
}

/// Holds every feature at its `rho0` dispersion except `feature`, whose
/// dispersion runs over `s_grid` (feature units).
pub fn sensitivity_sweep<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    features: &[FeatureMeta],
    rho0: f64,
    feature: usize,
    s_grid: &[f64],
    mc: &McConfig,
) -> Result<SweepCurve> {
    check_grid(s_grid)?;
    let meta = features.get(feature).ok_or(Error::Dimension {
        expected: features.len(),
        got: feature + 1,
    })?;
    if !meta.is_continuous() {
        return Err(Error::Config(format!(
            "feature `{}` is categorical and has no dispersion to sweep",
            meta.name
        )));
    }
    let base = dispersions(&UncertaintyProfile::new(rho0)?, features)?;
    let estimates = s_grid
        .par_iter()
        .map(|&si| {
            let mut s = base.clone();
            s[feature] = si;
            mc_probabilities(model, x, &s, mc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCurve::build(meta.name.clone(), s_grid, estimates))
}

/// Compares the probabilities at a large `rho` with class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDiagnostic {
    pub rho: f64,
    pub probs: ClassProbabilities,
    pub priors: Vec<f64>,
    pub total_variation: f64,
    /// Total variation above the tolerance: the model's large-`rho` limit
    /// does not reproduce the priors.
    pub diverges: bool,
}

pub fn prior_diagnostic<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    features: &[FeatureMeta],
    rho: f64,
    priors: &[f64],
    tolerance: f64,
    mc: &McConfig,
) -> Result<PriorDiagnostic> {
    if priors.len() != model.n_classes() {
        return Err(Error::Dimension {
            expected: model.n_classes(),
            got: priors.len(),
        });
    }
    let s = dispersions(&UncertaintyProfile::new(rho)?, features)?;
    let est = mc_probabilities(model, x, &s, mc)?;
    let total_variation = 0.5 * est.probs.iter().zip(priors).map(|(p, q)| (p - q).abs()).sum::<f64>();
    Ok(PriorDiagnostic {
        rho,
        probs: est.probs,
        priors: priors.to_vec(),
        total_variation,
        diverges: total_variation > tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{Condition, IntervalRuleSet, Rule};

    fn threshold() -> (IntervalRuleSet, Vec<FeatureMeta>) {
        let r = IntervalRuleSet::new(2, 2, vec![Rule::new(0, vec![Condition::at_most(0, 0.0)])], 1).unwrap();
        let f = vec![FeatureMeta::continuous("x", -5.0, 5.0), FeatureMeta::continuous("y", 0.0, 1.0)];
        (r, f)
    }

    #[test]
    fn single_zero_point_is_model_output() {
        let (r, f) = threshold();
        let c = rho_sweep(&r, &[-1.0, 0.5], &f, &[0.0], &McConfig::default()).unwrap();
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].probs.as_slice(), &[1.0, 0.0]);
        assert_eq!(c.max_change_at, None);
    }

    #[test]
    fn boundary_case_changes_first() {
        let (r, f) = threshold();
        let grid = [0.0, 0.05, 0.1, 0.15, 0.2];
        let c = rho_sweep(&r, &[0.0, 0.5], &f, &grid, &McConfig::new(4000, 1).unwrap()).unwrap();
        assert_eq!(c.max_change_at, Some(0.05));
    }

    #[test]
    fn grid_validation() {
        let (r, f) = threshold();
        let mc = McConfig::default();
        assert!(rho_sweep(&r, &[0.0, 0.0], &f, &[], &mc).is_err());
        assert!(rho_sweep(&r, &[0.0, 0.0], &f, &[0.1, 0.1], &mc).is_err());
        assert!(sensitivity_sweep(&r, &[0.0, 0.0], &f, 0.0, 5, &[0.1], &mc).is_err());
    }

    #[test]
    fn ignored_feature_flat() {
        let (r, f) = threshold();
        let mc = McConfig::new(4000, 2).unwrap();
        let c = sensitivity_sweep(&r, &[-0.3, 0.5], &f, 0.05, 1, &[0.0, 0.5, 1.0, 2.0], &mc).unwrap();
        let p0 = c.rows[0].probs[0];
        for row in &c.rows {
            assert!((row.probs[0] - p0).abs() <= 3.0 * row.stderr[0].max(c.rows[0].stderr[0]) + 1e-12);
        }
    }

    #[test]
    fn csv_columns() {
        let (r, f) = threshold();
        let c = rho_sweep(&r, &[-1.0, 0.5], &f, &[0.0, 0.1], &McConfig::new(100, 0).unwrap()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&["A".into(), "B".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("rho,p_A,p_B,se_A,se_B\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn priors_diagnostic_flags() {
        let (r, f) = threshold();
        let d = prior_diagnostic(&r, &[-1.0, 0.5], &f, 50.0, &[0.5, 0.5], 0.1, &McConfig::new(4000, 3).unwrap()).unwrap();
        assert!(!d.diverges);
        let d = prior_diagnostic(&r, &[-1.0, 0.5], &f, 50.0, &[0.9, 0.1], 0.1, &McConfig::new(4000, 3).unwrap()).unwrap();
        assert!(d.diverges);
    }
}
