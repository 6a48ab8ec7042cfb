//! Class elimination: keep the classes that remain plausible instead of
//! forcing one answer, merge classes that are routinely confused, and score
//! the outcome.

mod evaluation;
mod grouping;
mod pipeline;
mod policy;

pub use evaluation::{
    confused_pairs, high_confidence_errors, high_confidence_errors_from, outcomes, rejection_curve,
    rejection_curve_from, relaxed_accuracy, relaxed_accuracy_from, relaxed_accuracy_thresholded, verdict_accuracy,
    ConfusedPair, HighConfidenceErrors, RejectionPoint, SubThresholdRule,
};
pub use grouping::ClassGrouping;
pub use pipeline::{build_two_stage, two_stage_classify, JointStage, TwoStagePipeline};
pub use policy::{eliminate, ClassProb, EliminationPolicy, EliminationVerdict, VerdictMode};
