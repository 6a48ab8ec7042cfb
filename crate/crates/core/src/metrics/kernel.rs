use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape applied to a distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Kernel {
    /// The distance itself.
    Linear,
    /// Always 1.
    Uniform,
    /// `exp(-d² / 2w²)`
    Gaussian { width: f64 },
    /// `max(0, 1 - |d|/w)`
    Triangular { width: f64 },
    /// 1 at distance zero, else 0.
    Indicator,
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { width } | Kernel::Triangular { width } if !(width > 0.0 && width.is_finite()) => {
                Err(Error::Config(format!("kernel width must be positive, got {width}")))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, d: f64) -> f64 {
        match *self {
            Kernel::Linear => d,
            Kernel::Uniform => 1.0,
            Kernel::Gaussian { width } => (-d * d / (2.0 * width * width)).exp(),
            Kernel::Triangular { width } => (1.0 - d.abs() / width).max(0.0),
            Kernel::Indicator => {
                if d == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Σ_p kernel(distance[pred_p][truth_p]); the distance matrix must be
/// symmetric with a zero diagonal.
pub fn similarity_weighted_error(
    preds: &[usize],
    truth: &[usize],
    class_distance: &[Vec<f64>],
    kernel: Kernel,
) -> Result<f64> {
    kernel.validate()?;
    if preds.len() != truth.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let k = class_distance.len();
    if class_distance.iter().any(|r| r.len() != k) {
        return Err(Error::Validation("class distance matrix must be square".into()));
    }
    for i in 0..k {
        if class_distance[i][i] != 0.0 {
            return Err(Error::Validation("class distance matrix needs a zero diagonal".into()));
        }
        for j in 0..i {
            if class_distance[i][j] != class_distance[j][i] {
                return Err(Error::Validation(format!(
                    "class distance matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    preds
        .iter()
        .zip(truth)
        .map(|(&p, &t)| {
            if p >= k || t >= k {
                Err(Error::Validation(format!("class index {} out of range", p.max(t))))
            } else {
                Ok(kernel.eval(class_distance[p][t]))
            }
        })
        .sum()
}

/// Σ_p kernel(d_p)·(f_p − y_p)², with `d_p` the distance of case `p` to the
/// reference point.
pub fn locally_weighted_error(predictions: &[f64], targets: &[f64], distances: &[f64], kernel: Kernel) -> Result<f64> {
    kernel.validate()?;
    if predictions.len() != targets.len() || predictions.len() != distances.len() {
        return Err(Error::Validation(format!(
            "length mismatch: {} predictions, {} targets, {} distances",
            predictions.len(),
            targets.len(),
            distances.len()
        )));
    }
    let mut total = 0.0;
    for ((f, y), &d) in predictions.iter().zip(targets).zip(distances) {
        let w = kernel.eval(d);
        if w < 0.0 {
            return Err(Error::Config(format!("kernel weight {w} at distance {d} is negative")));
        }
        total += w * (f - y) * (f - y);
    }
    Ok(total)
}
