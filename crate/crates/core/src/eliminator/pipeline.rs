//! Two-stage decision support: a first-stage classifier answers when it is
//! reliable, otherwise joint-class models pick the group (merged or not) the
//! case most probably belongs to.

use serde::{Deserialize, Serialize};

use super::grouping::ClassGrouping;
use super::policy::{eliminate, EliminationPolicy, EliminationVerdict, VerdictMode};
use crate::classifiers::{train_joint, Classifier, MlpModel, Model, TrainConfig};
use crate::datakit::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStage {
    pub grouping: ClassGrouping,
    pub model: MlpModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStagePipeline {
    pub stage1: Model,
    /// `accept` is the stage-1 reliability threshold.
    pub policy: EliminationPolicy,
    pub second_stage: Vec<JointStage>,
}

/// Trains one joint-class network per grouping. Each grouping must merge at
/// least two classes.
pub fn build_two_stage(
    stage1: Model,
    groupings: &[ClassGrouping],
    train: &Dataset,
    hidden: usize,
    cfg: &TrainConfig,
    policy: EliminationPolicy,
) -> Result<TwoStagePipeline> {
    if stage1.n_classes() != train.n_classes() {
        return Err(Error::ClassMismatch(format!(
            "stage-1 model has {} classes, data has {}",
            stage1.n_classes(),
            train.n_classes()
        )));
    }
    let mut second_stage = Vec::with_capacity(groupings.len());
    for g in groupings {
        let ctx = |e: Error| Error::InGrouping {
            grouping: g.label(),
            source: Box::new(e),
        };
        g.check_classes(train.n_classes()).map_err(ctx)?;
        if g.merged_groups().is_empty() {
            return Err(ctx(Error::Validation(
                "a second-stage grouping must merge at least two classes".into(),
            )));
        }
        let (model, _) = train_joint(train, g, hidden, cfg).map_err(ctx)?;
        second_stage.push(JointStage {
            grouping: g.clone(),
            model,
        });
    }
    Ok(TwoStagePipeline {
        stage1,
        policy,
        second_stage,
    })
}

pub fn two_stage_classify(pipeline: &TwoStagePipeline, x: &[f64]) -> Result<EliminationVerdict> {
    let p1 = pipeline.stage1.predict(x)?;
    let policy = &pipeline.policy;
    if pipeline.second_stage.is_empty() {
        let mut v = eliminate(&p1, policy);
        v.trace = format!("stage 1 only: {}", v.trace);
        return Ok(v);
    }
    let top = p1.argmax();
    if p1[top] >= policy.accept {
        return Ok(EliminationVerdict::build(
            &p1,
            &[top],
            VerdictMode::ConfidentSingle,
            format!("stage 1: p[{top}] = {:.4} >= accept {}", p1[top], policy.accept),
        ));
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for (si, stage) in pipeline.second_stage.iter().enumerate() {
        let q = stage.model.predict(x)?;
        for g in 0..stage.grouping.len() {
            if best.is_none_or(|(s, _, _)| q[g] > s) {
                best = Some((q[g], si, g));
            }
        }
    }
    let (score, si, g) = best.expect("pipelines with joint stages have groups");
    let grouping = &pipeline.second_stage[si].grouping;
    let mut retained = grouping.groups()[g].clone();
    retained.sort_by(|&a, &b| p1[b].total_cmp(&p1[a]).then(a.cmp(&b)));
    let mode = if retained.len() == p1.len() {
        VerdictMode::Undecided
    } else {
        VerdictMode::Subset
    };
    let trace = format!(
        "stage 1: max p = {:.4} < accept {}; stage 2: group {} of grouping {} scored {:.4}",
        p1[top],
        policy.accept,
        grouping.names()[g],
        grouping.label(),
        score
    );
    Ok(EliminationVerdict::build(&p1, &retained, mode, trace))
}
