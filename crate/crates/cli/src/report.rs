//! Evaluation and comparison summaries shared by the CLI and the service.

use std::io::Write;

use eliminators_core::classifiers::{predict_all, Classifier};
use eliminators_core::eliminator::{
    confused_pairs, high_confidence_errors_from, outcomes, rejection_curve_from, relaxed_accuracy_from,
    ConfusedPair, HighConfidenceErrors, RejectionPoint,
};
use eliminators_core::metrics::{confusion, metric_report, z_score, TauVariance, ZScore};
use eliminators_core::{ConfusionMatrix, Dataset, Error, MetricReport, Result};
use serde::{Deserialize, Serialize};

/// 0, 0.05, ..., 0.95
pub fn default_thresholds() -> Vec<f64> {
    (0..20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub thresholds: Vec<f64>,
    pub base_rate: Option<f64>,
    pub tau_variance: TauVariance,
    pub high_confidence: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            thresholds: default_thresholds(),
            base_rate: None,
            tau_variance: TauVariance::AsPrinted,
            high_confidence: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub report: MetricReport,
    /// tau tested against chance (tau = 0); absent when its variance is 0.
    pub z_vs_chance: Option<ZScore>,
    pub relaxed_top2: Option<f64>,
    pub high_confidence_errors: HighConfidenceErrors,
    pub confused_pairs: Vec<NamedPair>,
    pub confusion: ConfusionMatrix,
    pub rejection_curve: Vec<RejectionPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedPair {
    pub first: String,
    pub second: String,
    pub score: u64,
}

fn named(cm: &ConfusionMatrix, pairs: Vec<ConfusedPair>) -> Vec<NamedPair> {
    pairs
        .into_iter()
        .map(|p| NamedPair {
            first: cm.class_names()[p.first].clone(),
            second: cm.class_names()[p.second].clone(),
            score: p.score,
        })
        .collect()
}

/// Scores `model` on `data`, which must already use the model's classes.
pub fn evaluate<C: Classifier + ?Sized>(model: &C, data: &Dataset, opts: &EvalOptions) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Validation("evaluation needs at least one case".into()));
    }
    let probs = predict_all(model, data)?;
    let preds: Vec<usize> = probs.iter().map(|p| p.argmax()).collect();
    let cm = confusion(&preds, &data.labels, &data.class_names)?;
    let report = metric_report(&cm, opts.base_rate, opts.tau_variance)?;
    let z_vs_chance = z_score(report.tau, report.var_tau, 0.0, 0.0).ok();
    let relaxed_top2 = (data.n_classes() >= 2)
        .then(|| relaxed_accuracy_from(&probs, &data.labels, 2))
        .transpose()?;
    Ok(Evaluation {
        report,
        z_vs_chance,
        relaxed_top2,
        high_confidence_errors: high_confidence_errors_from(&probs, &data.labels, opts.high_confidence)?,
        confused_pairs: named(&cm, confused_pairs(&cm)),
        rejection_curve: rejection_curve_from(&outcomes(&probs, &data.labels), &opts.thresholds)?,
        confusion: cm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub tau_a: f64,
    pub var_tau_a: f64,
    pub tau_b: f64,
    pub var_tau_b: f64,
    pub z: f64,
    pub significant: bool,
}

fn agreement<C: Classifier + ?Sized>(model: &C, data: &Dataset, opts: &EvalOptions) -> Result<MetricReport> {
    let preds: Vec<usize> = predict_all(model, data)?.iter().map(|p| p.argmax()).collect();
    metric_report(&confusion(&preds, &data.labels, &data.class_names)?, opts.base_rate, opts.tau_variance)
}

/// Two-sided test of `tau_a = tau_b` on the same data.
pub fn compare<A: Classifier + ?Sized, B: Classifier + ?Sized>(
    a: &A,
    b: &B,
    data: &Dataset,
    opts: &EvalOptions,
) -> Result<Comparison> {
    let (ra, rb) = (agreement(a, data, opts)?, agreement(b, data, opts)?);
    let z = z_score(ra.tau, ra.var_tau, rb.tau, rb.var_tau)?;
    Ok(Comparison {
        tau_a: ra.tau,
        var_tau_a: ra.var_tau,
        tau_b: rb.tau,
        var_tau_b: rb.var_tau,
        z: z.z,
        significant: z.significant,
    })
}

/// `threshold,rejection_rate,accuracy` with `NA` where nothing was retained.
pub fn write_rejection_csv<W: Write>(curve: &[RejectionPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "threshold,rejection_rate,accuracy")?;
    for p in curve {
        let acc = p.accuracy.map_or_else(|| "NA".to_string(), |a| format!("{a:?}"));
        writeln!(w, "{:?},{:?},{acc}", p.threshold, p.rejection_rate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use eliminators_core::classifiers::{Condition, IntervalRuleSet, Rule};

    fn blobs() -> Dataset {
        let cases: Vec<Vec<f64>> = (0..40).map(|i| vec![if i % 2 == 0 { 0.0 } else { 5.0 } + (i as f64) * 0.01]).collect();
        let labels = (0..40).map(|i| i % 2).collect();
        Dataset::with_computed_ranges("b", vec!["A".into(), "B".into()], vec!["x".into()], cases, labels).unwrap()
    }

    fn perfect() -> IntervalRuleSet {
        IntervalRuleSet::new(2, 1, vec![Rule::new(0, vec![Condition::at_most(0, 2.5)])], 1).unwrap()
    }

    #[test]
    fn perfect_model_has_unit_kappa() {
        let e = evaluate(&perfect(), &blobs(), &EvalOptions::default()).unwrap();
        assert_eq!(e.report.kappa, 1.0);
        assert_eq!(e.report.tau, 1.0);
        assert!(e.z_vs_chance.is_none());
        assert_eq!(e.rejection_curve.len(), 20);
        assert_eq!(e.relaxed_top2, Some(1.0));
    }

    #[test]
    fn self_comparison_is_zero() {
        let worse = IntervalRuleSet::new(2, 1, vec![Rule::new(0, vec![Condition::at_most(0, 0.1)])], 1).unwrap();
        let c = compare(&worse, &worse, &blobs(), &EvalOptions::default()).unwrap();
        assert_eq!(c.z, 0.0);
        assert!(!c.significant);
    }

    #[test]
    fn rejection_csv_marks_empty_points() {
        let curve = [
            RejectionPoint {
                threshold: 0.0,
                rejection_rate: 0.0,
                accuracy: Some(0.75),
            },
            RejectionPoint {
                threshold: 0.99,
                rejection_rate: 1.0,
                accuracy: None,
            },
        ];
        let mut buf = Vec::new();
        write_rejection_csv(&curve, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "threshold,rejection_rate,accuracy\n0.0,0.0,0.75\n0.99,1.0,NA\n"
        );
    }
}
