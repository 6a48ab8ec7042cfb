use eliminators_core::classifiers::{
    accuracy, committee_train, mlp_objective, train_joint, train_lda, train_mlp, Classifier, Condition, ErrorFunction,
    IntervalRuleSet, Model, RiskMatrix, Rule,
};
use eliminators_core::datakit::{sample_mixture, GaussianMixtureSpec};
use eliminators_core::uncertainty::{soft_rules_loss, tune_soft_rules, UncertaintyProfile};
use eliminators_core::{ClassGrouping, Dataset, Error, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mixture(means: Vec<Vec<f64>>, n: usize, seed: u64) -> Dataset {
    sample_mixture(&GaussianMixtureSpec::isotropic(means, 1.0, seed), n).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let data = mixture(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]], 60, 11);
    let base = TrainConfig {
        epochs: 1,
        seed: 3,
        ..TrainConfig::default()
    };
    let (mut model, _) = train_mlp(&data, 4, &base).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (point, error) in [ErrorFunction::Quadratic, ErrorFunction::CrossEntropy].into_iter().cycle().take(20).enumerate() {
        let cfg = TrainConfig {
            error,
            l2: 1e-3,
            risk: (point % 3 == 0).then(|| RiskMatrix::zero_one(3).scaled(0.3).unwrap()),
            ..base.clone()
        };
        let params: Vec<f64> = (0..model.n_params()).map(|_| rng.random_range(-1.5..1.5)).collect();
        model.set_params(&params);
        let (_, grad) = mlp_objective(&model, &data.cases, &data.labels, &cfg);
        let h = 1e-6;
        let fd: Vec<f64> = (0..params.len())
            .map(|i| {
                let mut p = params.clone();
                p[i] += h;
                model.set_params(&p);
                let up = mlp_objective(&model, &data.cases, &data.labels, &cfg).0;
                p[i] -= 2.0 * h;
                model.set_params(&p);
                let down = mlp_objective(&model, &data.cases, &data.labels, &cfg).0;
                (up - down) / (2.0 * h)
            })
            .collect();
        model.set_params(&params);
        let e = rel_err(&grad, &fd);
        assert!(e < 1e-4, "point {point}: relative error {e}");
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let data = mixture(vec![vec![0.0, 0.0], vec![2.0, 1.0]], 120, 5);
    let cfg = TrainConfig {
        epochs: 30,
        seed: 42,
        ..TrainConfig::default()
    };
    let (a, la) = train_mlp(&data, 5, &cfg).unwrap();
    let (b, lb) = train_mlp(&data, 5, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(la, lb);
    let (c, _) = train_mlp(&data, 5, &TrainConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn mlp_learns_separable_classes() {
    let data = mixture(vec![vec![0.0, 0.0], vec![6.0, 0.0], vec![0.0, 6.0]], 300, 8);
    let cfg = TrainConfig {
        epochs: 60,
        seed: 1,
        ..TrainConfig::default()
    };
    let (m, log) = train_mlp(&data, 6, &cfg).unwrap();
    assert!(accuracy(&m, &data).unwrap() > 0.97);
    assert!(log.epochs.last().unwrap().loss < log.epochs[0].loss);
}

#[test]
fn validation_split_and_patience_restore_best() {
    let data = mixture(vec![vec![0.0], vec![1.0]], 200, 4);
    let cfg = TrainConfig {
        epochs: 80,
        patience: Some(5),
        validation_fraction: 0.25,
        seed: 2,
        ..TrainConfig::default()
    };
    let (_, log) = train_mlp(&data, 3, &cfg).unwrap();
    let best = log.epochs[log.best_epoch - 1].validation_loss.unwrap();
    assert!(log.epochs.iter().all(|e| e.validation_loss.unwrap() >= best));
    assert!(log.epochs.len() <= 80);
}

#[test]
fn divergence_names_epoch() {
    let data = mixture(vec![vec![0.0], vec![1.0]], 50, 4);
    let cfg = TrainConfig {
        learning_rate: 1e300,
        epochs: 5,
        ..TrainConfig::default()
    };
    match train_mlp(&data, 3, &cfg) {
        Err(Error::Divergence { epoch }) => assert!((1..=5).contains(&epoch)),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn joint_with_singletons_equals_plain_training() {
    let data = mixture(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]], 90, 6);
    let cfg = TrainConfig {
        epochs: 10,
        seed: 9,
        ..TrainConfig::default()
    };
    let (plain, _) = train_mlp(&data, 4, &cfg).unwrap();
    let (joint, _) = train_joint(&data, &ClassGrouping::singletons(&data.class_names), 4, &cfg).unwrap();
    assert_eq!(plain, joint);
}

#[test]
fn joint_model_merges_confused_classes() {
    let data = mixture(vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![5.0, 0.0]], 300, 6);
    let g = ClassGrouping::parse("1,2|3", &data.class_names).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        seed: 1,
        ..TrainConfig::default()
    };
    let (m, _) = train_joint(&data, &g, 4, &cfg).unwrap();
    assert_eq!(m.n_classes(), 2);
    let p = m.predict(&[0.0, 0.0]).unwrap();
    assert!(p[0] > 0.9, "{p:?}");
}

#[test]
fn committee_variance_not_above_worst_member() {
    // resample training sets, compare output variance at fixed probe points
    let probes = [[0.5, 0.2], [1.0, 0.0], [1.5, -0.5]];
    let cfg = TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    };
    let mut member_outputs = vec![vec![Vec::new(); 3]; probes.len()];
    let mut committee_outputs = vec![Vec::new(); probes.len()];
    for r in 0..8u64 {
        let data = mixture(vec![vec![0.0, 0.0], vec![2.0, 0.0]], 80, 100 + r);
        let (c, _) = committee_train(&data, 3, 3, &TrainConfig { seed: r, ..cfg.clone() }).unwrap();
        for (pi, x) in probes.iter().enumerate() {
            committee_outputs[pi].push(c.predict(x).unwrap()[0]);
            for (j, m) in c.members().iter().enumerate() {
                member_outputs[pi][j].push(m.predict(x).unwrap()[0]);
            }
        }
    }
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    for pi in 0..probes.len() {
        let worst = member_outputs[pi].iter().map(|v| var(v)).fold(0.0, f64::max);
        assert!(var(&committee_outputs[pi]) <= worst + 1e-15);
    }
}

#[test]
fn committee_members_get_distinct_seeds() {
    let data = mixture(vec![vec![0.0], vec![2.0]], 60, 1);
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let (c, logs) = committee_train(&data, 3, 2, &cfg).unwrap();
    assert_eq!(logs.len(), 3);
    assert_ne!(c.members()[0], c.members()[1]);
    let (again, _) = committee_train(&data, 3, 2, &cfg).unwrap();
    assert_eq!(c, again);
    let _: Model = Model::Committee(c);
}

#[test]
fn lda_tracks_bayes_threshold_on_samples() {
    let data = mixture(vec![vec![0.0], vec![2.0]], 4000, 12);
    let m = train_lda(&data, 1.0).unwrap();
    // boundary where w·x = theta; the generating threshold is 1
    let boundary = m.theta / m.w[0];
    assert!((boundary - 1.0).abs() < 0.1, "{boundary}");
}

fn threshold_rules(t0: f64, t1: f64) -> IntervalRuleSet {
    IntervalRuleSet::new(
        2,
        1,
        vec![
            Rule::new(0, vec![Condition::at_most(0, t0)]),
            Rule::new(1, vec![Condition::at_least(0, t1)]),
        ],
        0,
    )
    .unwrap()
}

#[test]
fn soft_rule_gradient_matches_finite_differences() {
    let data = mixture(vec![vec![0.0, 0.0], vec![2.0, 1.0], vec![-1.0, 2.5]], 60, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for point in 0..20 {
        let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let (a0, a1) = (r(-1.5, 0.5), r(-1.0, 1.5));
        let rules = IntervalRuleSet::new(
            3,
            2,
            vec![
                Rule::new(0, vec![Condition::new(0, a0, a0 + r(1.0, 3.0)), Condition::at_most(1, r(0.0, 1.5))]),
                Rule::new(1, vec![Condition::new(0, r(0.5, 1.5), r(2.0, 4.0)), Condition::new(1, a1, a1 + r(1.0, 2.0))]),
                Rule::new(2, vec![Condition::at_least(1, r(1.0, 2.5))]),
            ],
            0,
        )
        .unwrap();
        let profile = UncertaintyProfile::new(r(0.03, 0.2)).unwrap();
        let (_, g) = soft_rules_loss(&rules, &profile, &data).unwrap();
        let mut analytic: Vec<f64> = Vec::new();
        let mut numeric: Vec<f64> = Vec::new();
        let h = 1e-6;
        let ends = rules.endpoints();
        for (ci, &(a, b)) in ends.iter().enumerate() {
            for (side, v) in [(0, a), (1, b)] {
                if !v.is_finite() {
                    continue;
                }
                let eval = |delta: f64| {
                    let mut e = ends.clone();
                    if side == 0 {
                        e[ci].0 += delta;
                    } else {
                        e[ci].1 += delta;
                    }
                    soft_rules_loss(&rules.with_endpoints(&e).unwrap(), &profile, &data).unwrap().0
                };
                numeric.push((eval(h) - eval(-h)) / (2.0 * h));
                analytic.push(if side == 0 { g.endpoints[ci].0 } else { g.endpoints[ci].1 });
            }
        }
        let eval_rho = |rho: f64| soft_rules_loss(&rules, &UncertaintyProfile::new(rho).unwrap(), &data).unwrap().0;
        numeric.push((eval_rho(profile.rho + h) - eval_rho(profile.rho - h)) / (2.0 * h));
        analytic.push(g.rho);
        let e = rel_err(&analytic, &numeric);
        assert!(e < 1e-4, "point {point}: relative error {e}");
    }
}

#[test]
fn tuning_moves_misplaced_threshold_to_bayes() {
    let data = mixture(vec![vec![0.0], vec![2.0]], 2000, 31);
    let range = data.features[0].range().unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.5,
        momentum: 0.5,
        epochs: 400,
        ..TrainConfig::default()
    };
    let tuned = tune_soft_rules(&threshold_rules(2.5, 2.5), &data, &UncertaintyProfile::new(0.05).unwrap(), &cfg).unwrap();
    let ends = tuned.rules.endpoints();
    for t in [ends[0].1, ends[1].0] {
        assert!((t - 1.0).abs() < 0.05 * range, "threshold {t}, range {range}");
    }
    assert!(tuned.log.windows(2).all(|w| w[1].best_loss <= w[0].best_loss));
    assert!(tuned.log.last().unwrap().best_loss < tuned.log[0].loss);
}

#[test]
fn tuning_is_stationary_at_optimum() {
    // well separated classes, threshold midway and small rho
    let data = mixture(vec![vec![0.0], vec![40.0]], 200, 2);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        momentum: 0.0,
        epochs: 50,
        ..TrainConfig::default()
    };
    let tuned = tune_soft_rules(&threshold_rules(20.0, 20.0), &data, &UncertaintyProfile::new(0.01).unwrap(), &cfg).unwrap();
    let first = tuned.log[0].loss;
    let last = tuned.log.last().unwrap().best_loss;
    assert!((first - last).abs() < 1e-6);
}

#[test]
fn tuning_needs_positive_dispersion() {
    let data = mixture(vec![vec![0.0], vec![2.0]], 50, 3);
    let err = tune_soft_rules(&threshold_rules(1.0, 1.0), &data, &UncertaintyProfile::new(0.0).unwrap(), &TrainConfig::default())
        .unwrap_err();
    assert_eq!(err.code(), "config");
}
