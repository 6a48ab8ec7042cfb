//! Class probabilities under Gaussian input uncertainty: Monte-Carlo
//! perturbation for any classifier, analytic soft-trapezoid probabilities
//! for interval rules, sweeps over the uncertainty level, and per-feature
//! confidence intervals.

mod interval;
mod mc;
mod profile;
mod soft;
mod sweep;

pub use interval::{confidence_interval, confidence_intervals, ConfidenceInterval, DEFAULT_BOUND_MULTIPLIER};
pub use mc::{mc_probabilities, McConfig, McEstimate};
pub use profile::{dispersion_rho_derivative, dispersions, FeatureGroup, UncertaintyProfile};
pub use soft::{
    analytic_condition_probability, soft_rules_loss, soft_rules_predict, soft_slope, tune_soft_rules, SoftRuleGradient,
    SoftRuleTuning, TuneRecord,
};
pub use sweep::{prior_diagnostic, rho_sweep, sensitivity_sweep, PriorDiagnostic, SweepCurve, SweepRow};
