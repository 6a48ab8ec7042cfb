use serde::{Deserialize, Serialize};

use super::ClassProbabilities;
use crate::error::{Error, Result};

/// `R[i][j]`: cost of assigning class `i` when the true class is `j`.
/// Square, nonnegative, zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RiskMatrix(Vec<Vec<f64>>);

impl RiskMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Validation("risk matrix must be square and non-empty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Validation(format!("risk R[{i}][{j}] = {v} is not a nonnegative real")));
                }
                if i == j && v != 0.0 {
                    return Err(Error::Validation(format!("risk diagonal R[{i}][{i}] must be zero")));
                }
            }
        }
        Ok(RiskMatrix(rows))
    }

    /// `R = 1 - delta`: every error costs one.
    pub fn zero_one(k: usize) -> Self {
        RiskMatrix(
            (0..k)
                .map(|i| (0..k).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, assigned: usize, truth: usize) -> f64 {
        self.0[assigned][truth]
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        RiskMatrix::new(
            self.0
                .iter()
                .map(|r| r.iter().map(|v| v * factor).collect())
                .collect(),
        )
    }

    pub(crate) fn check_size(&self, k: usize) -> Result<()> {
        if self.len() != k {
            return Err(Error::Dimension { expected: k, got: self.len() });
        }
        Ok(())
    }
}

impl TryFrom<Vec<Vec<f64>>> for RiskMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        RiskMatrix::new(rows)
    }
}

impl From<RiskMatrix> for Vec<Vec<f64>> {
    fn from(r: RiskMatrix) -> Self {
        r.0
    }
}

/// `sum_p R(argmax p, true class)`.
pub fn risk_weighted_loss(preds: &[ClassProbabilities], truth: &[usize], risk: &RiskMatrix) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::Dimension { expected: preds.len(), got: truth.len() });
    }
    let mut total = 0.0;
    for (p, &y) in preds.iter().zip(truth) {
        risk.check_size(p.len())?;
        if y >= risk.len() {
            return Err(Error::Validation(format!("true class {y} out of range")));
        }
        total += risk.get(p.argmax(), y);
    }
    Ok(total)
}
