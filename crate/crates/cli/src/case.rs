//! Single-case analysis: perturbed probabilities plus an elimination verdict.

use eliminators_core::eliminator::eliminate;
use eliminators_core::uncertainty::{dispersions, mc_probabilities};
use eliminators_core::{EliminationPolicy, EliminationVerdict, Error, McConfig, Result, TrainedModel, UncertaintyProfile};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseAnalysis {
    pub class_names: Vec<String>,
    pub probabilities: Vec<f64>,
    /// Monte-Carlo standard errors; all zero when rho is 0.
    pub stderr: Vec<f64>,
    pub rho: f64,
    pub verdict: EliminationVerdict,
}

pub fn check_features(model: &TrainedModel, x: &[f64]) -> Result<()> {
    if x.len() != model.features.len() {
        return Err(Error::Dimension {
            expected: model.features.len(),
            got: x.len(),
        });
    }
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("feature {j} is not a finite number")));
    }
    Ok(())
}

pub fn analyze_case(
    model: &TrainedModel,
    x: &[f64],
    rho: f64,
    policy: &EliminationPolicy,
    mc: &McConfig,
) -> Result<CaseAnalysis> {
    check_features(model, x)?;
    let s = dispersions(&UncertaintyProfile::new(rho)?, &model.features)?;
    let est = mc_probabilities(model, x, &s, mc)?;
    let verdict = eliminate(&est.probs, policy);
    Ok(CaseAnalysis {
        class_names: model.class_names.clone(),
        probabilities: est.probs.as_slice().to_vec(),
        stderr: est.stderr,
        rho,
        verdict,
    })
}
