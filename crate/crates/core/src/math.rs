//! Small numeric helpers shared across modules.

/// Logistic function `1 / (1 + e^-x)`, evaluated without overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax. Infinite negative entries map to exactly zero.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class indices ordered by decreasing value, ties by increasing index.
pub fn ranked_indices(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Derives an independent child seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Cholesky factor of a covariance matrix, rejecting matrices that are
/// singular up to rounding (a pivot below `1e-12` of the largest diagonal).
pub(crate) fn covariance_cholesky(
    cov: nalgebra::DMatrix<f64>,
) -> crate::Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = cov.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let chol = cov.cholesky().ok_or(crate::Error::SingularCovariance)?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
        return Err(crate::Error::SingularCovariance);
    }
    Ok(chol)
}
