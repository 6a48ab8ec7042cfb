use serde::{Deserialize, Serialize};

use super::profile::{dispersion_rho_derivative, dispersions, UncertaintyProfile};
use crate::classifiers::{check_dim, rules_predict, ClassProbabilities, IntervalRuleSet, TrainConfig};
use crate::datakit::Dataset;
use crate::error::{Error, Result};
use crate::math::sigmoid;

/// Logistic slope matching a Gaussian of standard deviation `s`:
/// `2.4 / (√2·s)`.
pub fn soft_slope(s: f64) -> f64 {
    2.4 / (std::f64::consts::SQRT_2 * s)
}

fn check_interval(a: f64, b: f64, s: f64) -> Result<()> {
    if a.is_nan() || b.is_nan() || a > b {
        return Err(Error::Validation(format!("interval [{a}, {b}] has a > b")));
    }
    if !(s >= 0.0) {
        return Err(Error::Config(format!("dispersion must be nonnegative, got {s}")));
    }
    Ok(())
}

fn condition_prob(a: f64, b: f64, x: f64, s: f64) -> f64 {
    if s == 0.0 {
        return if a <= x && x <= b { 1.0 } else { 0.0 };
    }
    let beta = soft_slope(s);
    (sigmoid(beta * (x - a)) - sigmoid(beta * (x - b))).max(0.0)
}

/// Probability that `x + s·z` falls in `[a, b]`, approximated by a
/// difference of logistic functions; the exact indicator when `s = 0`.
pub fn analytic_condition_probability(a: f64, b: f64, x: f64, s: f64) -> Result<f64> {
    check_interval(a, b, s)?;
    Ok(condition_prob(a, b, x, s))
}

/// Per-rule probabilities: product over the rule's conditions.
fn rule_probs(rules: &IntervalRuleSet, x: &[f64], s: &[f64]) -> Vec<f64> {
    rules
        .rules()
        .iter()
        .map(|r| {
            r.conditions
                .iter()
                .map(|c| condition_prob(c.a, c.b, x[c.feature], s[c.feature]))
                .product()
        })
        .collect()
}

/// Class score = the largest probability among the class's rules, with the
/// index of that rule.
fn class_scores(rules: &IntervalRuleSet, probs: &[f64], k: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    let mut score = vec![0.0; k];
    let mut arg = vec![None; k];
    for (ri, r) in rules.rules().iter().enumerate() {
        if arg[r.class].is_none() || probs[ri] > score[r.class] {
            score[r.class] = probs[ri];
            arg[r.class] = Some(ri);
        }
    }
    (score, arg)
}

/// Soft evaluation of a rule set under per-feature dispersions `s`.
/// Scores are normalized over classes; if no rule has any support the
/// default class takes everything. With all dispersions zero this is the
/// crisp first-match prediction.
pub fn soft_rules_predict(rules: &IntervalRuleSet, x: &[f64], s: &[f64]) -> Result<ClassProbabilities> {
    let k = crate::classifiers::Classifier::n_classes(rules);
    check_dim(crate::classifiers::Classifier::n_features(rules), x)?;
    check_dim(x.len(), s)?;
    if let Some(i) = s.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Config(format!("dispersion of feature {i} must be nonnegative")));
    }
    if s.iter().all(|&v| v == 0.0) {
        return rules_predict(rules, x);
    }
    let probs = rule_probs(rules, x, s);
    let (score, _) = class_scores(rules, &probs, k);
    Ok(ClassProbabilities::from_scores(&score).unwrap_or_else(|| ClassProbabilities::one_hot(k, rules.default_class())))
}

/// Gradient of the soft-rule loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftRuleGradient {
    /// `(dE/da, dE/db)` per condition, in rule/condition order. Infinite
    /// endpoints get zero.
    pub endpoints: Vec<(f64, f64)>,
    pub rho: f64,
}

/// `u·σ'(u)/β`-style term with the convention that an infinite endpoint
/// contributes nothing.
fn edge(beta: f64, x: f64, e: f64) -> (f64, f64) {
    if !e.is_finite() {
        return (0.0, 0.0);
    }
    let sg = sigmoid(beta * (x - e));
    let d = sg * (1.0 - sg);
    (d, (x - e) * d)
}

/// Mean over cases of `½ Σ_i (p_i − δ_i)²` for the soft rule set, with its
/// gradient in the endpoints and in the global `rho` of `profile`.
pub fn soft_rules_loss(rules: &IntervalRuleSet, profile: &UncertaintyProfile, data: &Dataset) -> Result<(f64, SoftRuleGradient)> {
    rules.check_features(&data.features)?;
    let s = dispersions(profile, &data.features)?;
    let ds = dispersion_rho_derivative(profile, &data.features);
    for r in rules.rules() {
        for c in &r.conditions {
            if s[c.feature] == 0.0 {
                return Err(Error::Config(format!(
                    "feature `{}` has zero dispersion; the crisp limit is not differentiable",
                    data.features[c.feature].name
                )));
            }
        }
    }
    let k = data.n_classes();
    let n_cond: usize = rules.rules().iter().map(|r| r.conditions.len()).sum();
    let offsets: Vec<usize> = rules
        .rules()
        .iter()
        .scan(0, |acc, r| {
            let o = *acc;
            *acc += r.conditions.len();
            Some(o)
        })
        .collect();
    let mut loss = 0.0;
    let mut g_end = vec![(0.0, 0.0); n_cond];
    let mut g_rho = 0.0;
    for (x, &y) in data.cases.iter().zip(&data.labels) {
        let probs = rule_probs(rules, x, &s);
        let (score, arg) = class_scores(rules, &probs, k);
        let total: f64 = score.iter().sum();
        if total <= 0.0 {
            let p = ClassProbabilities::one_hot(k, rules.default_class());
            loss += 0.5 * (0..k).map(|c| (p[c] - f64::from(u8::from(c == y))).powi(2)).sum::<f64>();
            continue;
        }
        let p: Vec<f64> = score.iter().map(|o| o / total).collect();
        let g: Vec<f64> = (0..k).map(|c| p[c] - f64::from(u8::from(c == y))).collect();
        loss += 0.5 * g.iter().map(|v| v * v).sum::<f64>();
        let gp: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        for c in 0..k {
            let Some(ri) = arg[c] else { continue };
            let d_score = (g[c] - gp) / total;
            let rule = &rules.rules()[ri];
            let lvals: Vec<f64> = rule
                .conditions
                .iter()
                .map(|cd| condition_prob(cd.a, cd.b, x[cd.feature], s[cd.feature]))
                .collect();
            for (ci, cd) in rule.conditions.iter().enumerate() {
                let others: f64 = lvals
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != ci)
                    .map(|(_, v)| v)
                    .product();
                let d_l = d_score * others;
                let sf = s[cd.feature];
                let beta = soft_slope(sf);
                let xv = x[cd.feature];
                let (da, ua) = edge(beta, xv, cd.a);
                let (db, ub) = edge(beta, xv, cd.b);
                let slot = &mut g_end[offsets[ri] + ci];
                slot.0 += d_l * (-beta * da);
                slot.1 += d_l * (beta * db);
                // dL/dβ · dβ/ds · ds/dρ
                g_rho += d_l * (ua - ub) * (-beta / sf) * ds[cd.feature];
            }
        }
    }
    let n = data.len() as f64;
    let grad = SoftRuleGradient {
        endpoints: g_end.into_iter().map(|(a, b)| (a / n, b / n)).collect(),
        rho: g_rho / n,
    };
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub step: usize,
    pub loss: f64,
    /// Lowest loss seen so far.
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftRuleTuning {
    pub rules: IntervalRuleSet,
    pub rho: f64,
    pub log: Vec<TuneRecord>,
}

const MIN_RHO: f64 = 1e-6;

/// Full-batch gradient descent with momentum on the finite rule endpoints
/// and the global `rho`. `cfg.epochs` is the number of steps. Endpoints are
/// projected back to `a <= b` and `rho` to a small positive floor. The best
/// parameters seen are returned.
pub fn tune_soft_rules(
    rules: &IntervalRuleSet,
    train: &Dataset,
    profile: &UncertaintyProfile,
    cfg: &TrainConfig,
) -> Result<SoftRuleTuning> {
    cfg.validate()?;
    let mut current = rules.clone();
    let mut prof = profile.clone();
    let (mut loss, mut grad) = soft_rules_loss(&current, &prof, train)?;
    let mut best = (loss, current.clone(), prof.rho);
    let mut log = vec![TuneRecord {
        step: 0,
        loss,
        best_loss: loss,
    }];
    let mut vel_end = vec![(0.0, 0.0); grad.endpoints.len()];
    let mut vel_rho = 0.0;
    let tunes_rho = dispersion_rho_derivative(&prof, &train.features)
        .iter()
        .any(|&d| d > 0.0);
    for step in 1..=cfg.epochs {
        let mut ends = current.endpoints();
        for ((e, v), g) in ends.iter_mut().zip(&mut vel_end).zip(&grad.endpoints) {
            v.0 = cfg.momentum * v.0 - cfg.learning_rate * g.0;
            v.1 = cfg.momentum * v.1 - cfg.learning_rate * g.1;
            if e.0.is_finite() {
                e.0 += v.0;
            }
            if e.1.is_finite() {
                e.1 += v.1;
            }
            if e.0 > e.1 {
                let mid = 0.5 * (e.0 + e.1);
                *e = (mid, mid);
            }
        }
        if tunes_rho {
            vel_rho = cfg.momentum * vel_rho - cfg.learning_rate * grad.rho;
            prof.rho = (prof.rho + vel_rho).max(MIN_RHO);
        }
        current = current.with_endpoints(&ends)?;
        (loss, grad) = soft_rules_loss(&current, &prof, train)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch: step });
        }
        if loss < best.0 {
            best = (loss, current.clone(), prof.rho);
        }
        log.push(TuneRecord {
            step,
            loss,
            best_loss: best.0,
        });
    }
    Ok(SoftRuleTuning {
        rules: best.1,
        rho: best.2,
        log,
    })
}
