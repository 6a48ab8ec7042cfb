//! Confusion matrices, chance-corrected agreement statistics and
//! kernel-weighted error functionals.

mod agreement;
mod confusion;
mod kernel;

pub use agreement::{kappa, metric_report, tau, variances, z_score, MetricReport, TauVariance, ZScore, Z_CRITICAL_95};
pub use confusion::{confusion, ConfusionMatrix};
pub use kernel::{locally_weighted_error, similarity_weighted_error, Kernel};
