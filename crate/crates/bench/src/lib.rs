//! Fixtures shared by the benchmarks.

use eliminators_core::datakit::{sample_mixture, GaussianMixtureSpec};
use eliminators_core::Dataset;

/// Two unit-variance Gaussians in `dim` dimensions, means 2 apart on the
/// first axis.
pub fn two_gaussians(dim: usize, n: usize, seed: u64) -> (GaussianMixtureSpec, Dataset) {
    let mut m1 = vec![0.0; dim];
    m1[0] = 2.0;
    let spec = GaussianMixtureSpec::isotropic(vec![vec![0.0; dim], m1], 1.0, seed);
    let data = sample_mixture(&spec, n).expect("valid mixture");
    (spec, data)
}
