//! Uncertainty-aware classification: probabilistic and crisp classifiers,
//! class probabilities under input perturbation, class elimination, and
//! chance-corrected performance statistics.

pub mod classifiers;
pub mod datakit;
pub mod eliminator;
mod error;
pub mod math;
pub mod metrics;
pub mod uncertainty;

pub use classifiers::{ClassProbabilities, Classifier, Model, TrainConfig, TrainedModel};
pub use datakit::{Dataset, FeatureKind, FeatureMeta, GaussianMixtureSpec};
pub use eliminator::{ClassGrouping, EliminationPolicy, EliminationVerdict, VerdictMode};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, MetricReport};
pub use uncertainty::{McConfig, SweepCurve, UncertaintyProfile};
