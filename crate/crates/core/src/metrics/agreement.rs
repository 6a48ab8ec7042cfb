use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use crate::error::{Error, Result};

/// Two-sided 95% critical value of the standard normal.
pub const Z_CRITICAL_95: f64 = 1.96;

/// Cohen's κ: agreement corrected for the agreement expected by chance
/// from the marginals.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total() as f64;
    let chance: f64 = cm
        .row_sums()
        .iter()
        .zip(cm.column_sums())
        .map(|(&r, c)| r as f64 * c as f64)
        .sum();
    let denom = n * n - chance;
    if denom == 0.0 {
        return Err(Error::DegenerateMatrix(
            "kappa is undefined when every count sits in one cell".into(),
        ));
    }
    Ok((n * cm.trace() as f64 - chance) / denom)
}

/// Largest true-class frequency.
fn base_rate(cm: &ConfusionMatrix) -> f64 {
    let max = cm.column_sums().into_iter().max().unwrap_or(0);
    max as f64 / cm.total() as f64
}

fn resolve_base_rate(cm: &ConfusionMatrix, p_r: Option<f64>) -> Result<f64> {
    match p_r {
        Some(p) if (0.0..1.0).contains(&p) => Ok(p),
        Some(p) => Err(Error::Config(format!("base rate must lie in [0, 1), got {p}"))),
        None => {
            let p = base_rate(cm);
            if p >= 1.0 {
                Err(Error::DegenerateMatrix(
                    "tau is undefined when all cases share one true class".into(),
                ))
            } else {
                Ok(p)
            }
        }
    }
}

/// τ = (p₀ − p_r)/(1 − p_r). `p_r` defaults to the largest true-class
/// frequency.
pub fn tau(cm: &ConfusionMatrix, p_r: Option<f64>) -> Result<f64> {
    let p_r = resolve_base_rate(cm, p_r)?;
    Ok((cm.accuracy() - p_r) / (1.0 - p_r))
}

/// Denominator used for the variance of τ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauVariance {
    /// `var(p₀) / (1 − p_r)`
    #[default]
    AsPrinted,
    /// `var(p₀) / (1 − p_r)²`, the delta-method form.
    DeltaMethod,
}

/// `(var(p₀), var(τ))` with `var(p₀) = p₀(1 − p₀)/N`.
pub fn variances(cm: &ConfusionMatrix, p_r: Option<f64>, form: TauVariance) -> Result<(f64, f64)> {
    let p_r = resolve_base_rate(cm, p_r)?;
    let p0 = cm.accuracy();
    let var_p0 = p0 * (1.0 - p0) / cm.total() as f64;
    let var_tau = match form {
        TauVariance::AsPrinted => var_p0 / (1.0 - p_r),
        TauVariance::DeltaMethod => var_p0 / ((1.0 - p_r) * (1.0 - p_r)),
    };
    Ok((var_p0, var_tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub z: f64,
    /// `|z| >= 1.96`
    pub significant: bool,
}

/// Compares two τ values with their variances.
pub fn z_score(tau1: f64, var1: f64, tau2: f64, var2: f64) -> Result<ZScore> {
    if !(var1 >= 0.0 && var2 >= 0.0) {
        return Err(Error::Validation("variances must be nonnegative".into()));
    }
    let sd = (var1 + var2).sqrt();
    if sd == 0.0 {
        return Err(Error::Validation("z score needs a nonzero variance".into()));
    }
    let z = (tau1 - tau2) / sd;
    Ok(ZScore {
        z,
        significant: z.abs() >= Z_CRITICAL_95,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: f64,
    pub p0: f64,
    pub base_rate: f64,
    pub kappa: f64,
    pub tau: f64,
    pub var_p0: f64,
    pub var_tau: f64,
    pub tau_variance: TauVariance,
}

pub fn metric_report(cm: &ConfusionMatrix, p_r: Option<f64>, form: TauVariance) -> Result<MetricReport> {
    let base_rate = resolve_base_rate(cm, p_r)?;
    let (var_p0, var_tau) = variances(cm, Some(base_rate), form)?;
    Ok(MetricReport {
        n: cm.total() as f64,
        p0: cm.accuracy(),
        base_rate,
        kappa: kappa(cm)?,
        tau: tau(cm, Some(base_rate))?,
        var_p0,
        var_tau,
        tau_variance: form,
    })
}
