use serde::{Deserialize, Serialize};

use crate::classifiers::{check_dim, Classifier};
use crate::datakit::FeatureMeta;
use crate::error::{Error, Result};

pub const DEFAULT_BOUND_MULTIPLIER: f64 = 1.0;

const SCAN_POINTS: usize = 256;
const VERIFY_POINTS: usize = 64;
const ARGMAX_TOLERANCE: f64 = 1e-9;

/// Range of one feature, others fixed, over which the most probable class
/// stays the same.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub feature: usize,
    pub value: f64,
    pub low: f64,
    pub high: f64,
    /// Distance from `value` to the nearer end.
    pub radius: f64,
    pub class: usize,
}

/// Searches outward from `x[feature]` within `[min − m·range, max + m·range]`,
/// locating each end by bisection to `1e-4·range`, then checks 64 evenly
/// spaced points inside the result and shrinks it if any disagrees.
pub fn confidence_interval<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    features: &[FeatureMeta],
    feature: usize,
    bound_multiplier: f64,
) -> Result<ConfidenceInterval> {
    check_dim(model.n_features(), x)?;
    check_dim(features.len(), x)?;
    if !(bound_multiplier >= 0.0 && bound_multiplier.is_finite()) {
        return Err(Error::Config(format!("bound multiplier must be nonnegative, got {bound_multiplier}")));
    }
    let meta = features.get(feature).ok_or(Error::Dimension {
        expected: features.len(),
        got: feature + 1,
    })?;
    let Some((min, max)) = meta.bounds() else {
        return Err(Error::Config(format!("feature `{}` is categorical", meta.name)));
    };
    let p = model.predict(x)?;
    if !p.has_unique_argmax(ARGMAX_TOLERANCE) {
        return Err(Error::Borderline);
    }
    let class = p.argmax();
    let range = if max > min { max - min } else { 1.0 };
    let xi = x[feature];
    let lo_bound = (min - bound_multiplier * range).min(xi);
    let hi_bound = (max + bound_multiplier * range).max(xi);
    let tol = 1e-4 * range;

    let mut probe = x.to_vec();
    let mut same = |v: f64| -> Result<bool> {
        probe[feature] = v;
        Ok(model.predict(&probe)?.argmax() == class)
    };
    let mut low = search(&mut same, xi, lo_bound, tol)?;
    let mut high = search(&mut same, xi, hi_bound, tol)?;
    // shrink until the verification grid agrees everywhere
    loop {
        let mut offender: Option<f64> = None;
        for i in 0..VERIFY_POINTS {
            let v = low + (high - low) * i as f64 / (VERIFY_POINTS - 1) as f64;
            if !same(v)? {
                let closer = match offender {
                    None => true,
                    Some(o) => (v - xi).abs() < (o - xi).abs(),
                };
                if closer {
                    offender = Some(v);
                }
            }
        }
        let Some(bad) = offender else { break };
        let end = bisect(&mut same, xi, bad, tol)?;
        if bad < xi {
            low = end;
        } else {
            high = end;
        }
    }
    Ok(ConfidenceInterval {
        feature,
        value: xi,
        low,
        high,
        radius: (xi - low).min(high - xi),
        class,
    })
}

/// Walks from `start` toward `bound` and returns the last point before the
/// class first changes.
fn search(same: &mut impl FnMut(f64) -> Result<bool>, start: f64, bound: f64, tol: f64) -> Result<f64> {
    let mut prev = start;
    for i in 1..=SCAN_POINTS {
        let v = start + (bound - start) * i as f64 / SCAN_POINTS as f64;
        if !same(v)? {
            return bisect(same, prev, v, tol);
        }
        prev = v;
    }
    Ok(bound)
}

/// `inside` keeps the class, `outside` does not.
fn bisect(same: &mut impl FnMut(f64) -> Result<bool>, mut inside: f64, mut outside: f64, tol: f64) -> Result<f64> {
    while (outside - inside).abs() > tol {
        let mid = 0.5 * (inside + outside);
        if same(mid)? {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(inside)
}

/// Intervals for every continuous feature.
pub fn confidence_intervals<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    features: &[FeatureMeta],
    bound_multiplier: f64,
) -> Result<Vec<ConfidenceInterval>> {
    (0..features.len())
        .filter(|&i| features[i].is_continuous())
        .map(|i| confidence_interval(model, x, features, i, bound_multiplier))
        .collect()
}
