//! Model construction shared by `train` and `POST /v1/models`.

use eliminators_core::classifiers::{
    committee_train, knn_leave_one_out_accuracy, train_joint, train_lda_with_ridge, train_mlp,
    tune_lda_slope, IntervalRuleSet, KnnMode, KnnModel, Metric, TrainLog,
};
use eliminators_core::uncertainty::{tune_soft_rules, TuneRecord};
use eliminators_core::{ClassGrouping, Dataset, Error, Model, Result, TrainConfig, TrainedModel, UncertaintyProfile};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Joint,
    Lda,
    Knn,
    Rules,
    Committee,
}

/// Everything a model kind may need. Fields irrelevant to the chosen kind
/// are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub hidden: usize,
    pub train: TrainConfig,
    /// Grouping such as `"1,2|3|4"` (1-based class numbers); joint models only.
    pub groups: Option<String>,
    pub members: usize,
    pub k: usize,
    pub metric: Metric,
    pub knn_mode: KnnMode,
    /// Fixed LDA slope; when absent the slope is tuned on the training data.
    pub slope: Option<f64>,
    pub ridge: f64,
    pub rules: Option<IntervalRuleSet>,
    /// Tune rule endpoints and rho by soft-rule gradient descent from this rho.
    pub tune_rho: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            hidden: 8,
            train: TrainConfig::default(),
            groups: None,
            members: 5,
            k: 1,
            metric: Metric::Manhattan,
            knn_mode: KnnMode::Crisp,
            slope: None,
            ridge: 0.0,
            rules: None,
            tune_rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingLog {
    Mlp {
        log: TrainLog,
    },
    Joint {
        grouping: String,
        groups: Vec<String>,
        log: TrainLog,
    },
    Committee {
        members: Vec<TrainLog>,
    },
    Lda {
        slope: f64,
        slope_tuned: bool,
    },
    Knn {
        k: usize,
        leave_one_out_accuracy: f64,
    },
    Rules {
        tuned_rho: Option<f64>,
        tuning: Vec<TuneRecord>,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Set for joint models, whose outputs are groups of the data classes.
    pub grouping: Option<ClassGrouping>,
    pub log: TrainingLog,
}

pub fn train(kind: ModelKind, opts: &TrainOptions, data: &Dataset) -> Result<TrainOutcome> {
    let wrap = |model: Model| TrainedModel::for_dataset(data, model);
    let plain = |model: TrainedModel, log| TrainOutcome {
        model,
        grouping: None,
        log,
    };
    Ok(match kind {
        ModelKind::Mlp => {
            let (m, log) = train_mlp(data, opts.hidden, &opts.train)?;
            plain(wrap(Model::Mlp(m))?, TrainingLog::Mlp { log })
        }
        ModelKind::Joint => {
            let text = opts
                .groups
                .as_deref()
                .ok_or_else(|| Error::Config("joint models need a grouping such as \"1,2|3|4\"".into()))?;
            let grouping = ClassGrouping::parse(text, &data.class_names)?;
            let (m, log) = train_joint(data, &grouping, opts.hidden, &opts.train).map_err(|e| Error::InGrouping {
                grouping: grouping.label(),
                source: Box::new(e),
            })?;
            let model = TrainedModel::new(grouping.names().to_vec(), data.features.clone(), Model::Mlp(m))?;
            TrainOutcome {
                model,
                log: TrainingLog::Joint {
                    grouping: grouping.label(),
                    groups: grouping.names().to_vec(),
                    log,
                },
                grouping: Some(grouping),
            }
        }
        ModelKind::Committee => {
            let (c, members) = committee_train(data, opts.members, opts.hidden, &opts.train)?;
            plain(wrap(Model::Committee(c))?, TrainingLog::Committee { members })
        }
        ModelKind::Lda => {
            let (m, tuned) = match opts.slope {
                Some(s) => (train_lda_with_ridge(data, s, opts.ridge)?, false),
                None => (tune_lda_slope(&train_lda_with_ridge(data, 1.0, opts.ridge)?, data)?, true),
            };
            let slope = m.slope;
            plain(wrap(Model::Lda(m))?, TrainingLog::Lda { slope, slope_tuned: tuned })
        }
        ModelKind::Knn => {
            let m = KnnModel::fit(data, opts.k, opts.metric, opts.knn_mode)?;
            let loo = if data.len() >= 2 { knn_leave_one_out_accuracy(data, opts.k, opts.metric)? } else { 0.0 };
            plain(
                wrap(Model::Knn(m))?,
                TrainingLog::Knn {
                    k: opts.k,
                    leave_one_out_accuracy: loo,
                },
            )
        }
        ModelKind::Rules => {
            let rules = opts
                .rules
                .as_ref()
                .ok_or_else(|| Error::Config("rule models need a rule set (rules are supplied, not induced)".into()))?;
            let (rules, tuned_rho, tuning) = match opts.tune_rho {
                Some(rho) => {
                    let t = tune_soft_rules(rules, data, &UncertaintyProfile::new(rho)?, &opts.train)?;
                    (t.rules, Some(t.rho), t.log)
                }
                None => (rules.clone(), None, Vec::new()),
            };
            plain(wrap(Model::Rules(rules))?, TrainingLog::Rules { tuned_rho, tuning })
        }
    })
}

/// Relabels `data` with group indices so that a joint model can be scored.
pub fn group_dataset(data: &Dataset, grouping: &ClassGrouping) -> Result<Dataset> {
    grouping.check_classes(data.n_classes())?;
    Dataset::new(
        data.name.clone(),
        grouping.names().to_vec(),
        data.features.clone(),
        data.cases.clone(),
        data.labels.iter().map(|&y| grouping.group_of(y)).collect(),
    )
}

/// Dataset `model` can be scored on: `data` itself, or `data` regrouped when
/// the model was trained on groups of its classes.
pub fn scoring_view(model: &TrainedModel, grouping: Option<&ClassGrouping>, data: &Dataset) -> Result<Dataset> {
    let view = match grouping {
        Some(g) if model.class_names != data.class_names => group_dataset(data, g)?,
        _ => data.clone(),
    };
    model.check_compatible(&view)?;
    Ok(view)
}
