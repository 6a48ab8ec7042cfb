//! Acceptance criteria. Each prints one PASS/FAIL line; the process exits
//! nonzero if any fails.

use std::time::{Duration, Instant};

use eliminators_core::classifiers::{
    accuracy, mlp_objective, predict_all, rules_predict, train_mlp, BayesModel, ClassProbabilities, Committee,
    Condition, ErrorFunction, IntervalRuleSet, KnnMode, KnnModel, LinearLogisticModel, Metric, Model, Rule,
};
use eliminators_core::datakit::{bayes_posterior, sample_mixture, GaussianMixtureSpec};
use eliminators_core::eliminator::{
    build_two_stage, confused_pairs, eliminate, rejection_curve, relaxed_accuracy, two_stage_classify,
    verdict_accuracy, EliminationPolicy,
};
use eliminators_core::metrics::{kappa, tau, z_score, ConfusionMatrix};
use eliminators_core::uncertainty::{
    analytic_condition_probability, dispersions, mc_probabilities, rho_sweep, soft_rules_loss, soft_rules_predict,
    McConfig, UncertaintyProfile,
};
use eliminators_core::{ClassGrouping, Classifier, Dataset, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// E[f(x + s z)] by the trapezoid rule over z in [-10, 10].
fn smooth(f: impl Fn(f64) -> f64, x: f64, s: f64) -> f64 {
    let n = 4000;
    let pdf = Normal::standard();
    let h = 20.0 / n as f64;
    (0..=n)
        .map(|i| {
            let z = -10.0 + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * f(x + s * z) * pdf.pdf(z)
        })
        .sum::<f64>()
        * h
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn posterior_oracle() -> Outcome {
    let spec = GaussianMixtureSpec::isotropic(vec![vec![0.0, 0.0], vec![2.0, 0.0]], 1.0, 2024);
    let bayes = BayesModel::new(spec.clone()).map_err(|e| e.to_string())?;
    let points = sample_mixture(&GaussianMixtureSpec { seed: 7, ..spec.clone() }, 200).map_err(|e| e.to_string())?;
    let reference = sample_mixture(&spec, 2000).map_err(|e| e.to_string())?;
    let mc0 = McConfig::new(10_000, 1).unwrap();
    for x in &points.cases {
        let exact = bayes_posterior(&spec, x).map_err(|e| e.to_string())?;
        let est = mc_probabilities(&bayes, x, &[0.0, 0.0], &mc0).map_err(|e| e.to_string())?;
        check(est.probs == exact, || format!("s=0 differs at {x:?}"))?;
    }
    let s = dispersions(&UncertaintyProfile::new(0.05).unwrap(), &reference.features).map_err(|e| e.to_string())?;
    let mut within = 0;
    for (i, x) in points.cases.iter().enumerate() {
        let mc = McConfig::new(10_000, 100 + i as u64).unwrap();
        let est = mc_probabilities(&bayes, x, &s, &mc).map_err(|e| e.to_string())?;
        // log-odds of the first class are 2 - 2 x0 for these means
        let oracle = smooth(|v| logistic(2.0 - 2.0 * v), x[0], s[0]);
        let diff = (est.probs[0] - oracle).abs();
        if diff <= 3.0 * est.stderr[0] || diff <= 1e-12 {
            within += 1;
        }
    }
    let frac = within as f64 / points.len() as f64;
    check(frac >= 0.95, || format!("only {:.1}% of points within 3 SE", 100.0 * frac))?;
    Ok(format!("s=0 exact at 200/200 points; rho=0.05: {:.1}% within 3 SE", 100.0 * frac))
}

fn logistic_vs_gaussian() -> Outcome {
    let normal = Normal::standard();
    let mut worst: f64 = 0.0;
    for s in [0.05, 0.5, 1.0, 3.0] {
        let n = 400_000;
        for i in 0..=n {
            let x = -8.0 * s + 16.0 * s * i as f64 / n as f64;
            let p = analytic_condition_probability(0.0, f64::INFINITY, x, s).map_err(|e| e.to_string())?;
            worst = worst.max((p - normal.cdf(x / s)).abs());
        }
    }
    check(worst <= 0.015, || format!("sup gap {worst:.5} > 0.015"))?;
    Ok(format!("sup gap {worst:.5} (bound 0.015)"))
}

fn printed_matrix() -> Outcome {
    let cm = ConfusionMatrix::new(
        ["AL", "PH", "LC", "CH"].iter().map(|s| s.to_string()).collect(),
        vec![vec![70, 6, 3, 3], vec![3, 121, 3, 1], vec![1, 8, 77, 2], vec![0, 0, 0, 72]],
    )
    .map_err(|e| e.to_string())?;
    let p0 = cm.accuracy();
    check(p0 == 340.0 / 370.0, || format!("p0 = {p0}"))?;
    let k = kappa(&cm).map_err(|e| e.to_string())?;
    check((k - 0.8897).abs() <= 0.0005, || format!("kappa = {k}"))?;
    let t = tau(&cm, None).map_err(|e| e.to_string())?;
    check((t - 0.8723).abs() <= 0.0005 && (t - 205.0 / 235.0).abs() < 1e-12, || format!("tau = {t}"))?;
    let pairs = confused_pairs(&cm);
    let name = |i: usize| cm.class_names()[i].as_str();
    let top: Vec<(&str, &str, u64)> = pairs.iter().take(2).map(|p| (name(p.first), name(p.second), p.score)).collect();
    check(top == [("PH", "LC", 11), ("AL", "PH", 9)], || format!("top pairs {top:?}"))?;
    Ok(format!("p0 = 340/370, kappa = {k:.4}, tau = {t:.4}, pairs (PH,LC)=11 (AL,PH)=9"))
}

fn joint_class_gain() -> Outcome {
    let spec = GaussianMixtureSpec::isotropic(
        vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0]],
        1.0,
        31,
    );
    let data = sample_mixture(&spec, 2400).map_err(|e| e.to_string())?;
    let (train, test) = data.split(0.3, 5).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 60,
        seed: 11,
        ..TrainConfig::default()
    };
    let (flat, _) = train_mlp(&train, 8, &cfg).map_err(|e| e.to_string())?;
    let flat_top1 = accuracy(&flat, &test).map_err(|e| e.to_string())?;
    let grouping = ClassGrouping::parse("1,2|3|4", &train.class_names).map_err(|e| e.to_string())?;
    let policy = EliminationPolicy::new(0.9, 0.2, 2).unwrap();
    let pipe = build_two_stage(Model::Mlp(flat), &[grouping], &train, 8, &cfg, policy).map_err(|e| e.to_string())?;
    let verdicts = test
        .cases
        .iter()
        .map(|x| two_stage_classify(&pipe, x))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    check(verdicts.iter().all(|v| v.retained.len() <= 2), || "a verdict kept more than two classes".into())?;
    let relaxed = verdict_accuracy(&verdicts, &test.labels);
    let gain = 100.0 * (relaxed - flat_top1);
    check(gain >= 5.0, || format!("gain {gain:.1} pp (pipeline {relaxed:.3}, flat {flat_top1:.3})"))?;
    Ok(format!("two-stage relaxed top-2 {:.1}% vs flat top-1 {:.1}% (+{gain:.1} pp)", 100.0 * relaxed, 100.0 * flat_top1))
}

fn rejection_properties() -> Outcome {
    let spec = GaussianMixtureSpec::isotropic(vec![vec![0.0, 0.0], vec![1.5, 0.0], vec![0.0, 1.5]], 1.0, 3);
    let data = sample_mixture(&spec, 900).map_err(|e| e.to_string())?;
    let (train, test) = data.split(0.3, 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 40,
        seed: 8,
        ..TrainConfig::default()
    };
    let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let run = || -> Result<_, String> {
        let (m, _) = train_mlp(&train, 6, &cfg).map_err(|e| e.to_string())?;
        let curve = rejection_curve(&m, &test, &thresholds).map_err(|e| e.to_string())?;
        Ok((m, curve))
    };
    let (model, curve) = run()?;
    check(curve.windows(2).all(|w| w[1].rejection_rate >= w[0].rejection_rate), || "rejection rate decreases".into())?;
    let plain = accuracy(&model, &test).map_err(|e| e.to_string())?;
    check(curve[0].accuracy == Some(plain) && curve[0].rejection_rate == 0.0, || {
        format!("threshold 0 accuracy {:?} vs {plain}", curve[0].accuracy)
    })?;
    let (_, again) = run()?;
    let a = serde_json::to_string(&curve).unwrap();
    let b = serde_json::to_string(&again).unwrap();
    check(a == b, || "curve differs between identical runs".into())?;
    Ok(format!("monotone over {} thresholds, accuracy at 0 = {plain:.4}, bit-identical rerun", thresholds.len()))
}

fn gradient_checks() -> Outcome {
    let spec = GaussianMixtureSpec::isotropic(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]], 1.0, 5);
    let data = sample_mixture(&spec, 60).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let base = TrainConfig {
        epochs: 1,
        l2: 1e-3,
        ..TrainConfig::default()
    };
    let (mut model, _) = train_mlp(&data, 4, &base).map_err(|e| e.to_string())?;
    let h = 1e-6;
    let mut worst_mlp: f64 = 0.0;
    for point in 0..20 {
        let cfg = TrainConfig {
            error: if point % 2 == 0 { ErrorFunction::Quadratic } else { ErrorFunction::CrossEntropy },
            ..base.clone()
        };
        let params: Vec<f64> = (0..model.n_params()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mut loss_at = |p: &[f64]| {
            model.set_params(p);
            mlp_objective(&model, &data.cases, &data.labels, &cfg)
        };
        let (_, grad) = loss_at(&params);
        let fd: Vec<f64> = (0..params.len())
            .map(|i| {
                let mut p = params.clone();
                p[i] += h;
                let up = loss_at(&p).0;
                p[i] -= 2.0 * h;
                (up - loss_at(&p).0) / (2.0 * h)
            })
            .collect();
        worst_mlp = worst_mlp.max(rel_err(&grad, &fd));
    }
    check(worst_mlp < 1e-4, || format!("MLP relative error {worst_mlp:.2e}"))?;

    let mut worst_soft: f64 = 0.0;
    for _ in 0..20 {
        let mut r = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let a = r(-1.5, 0.5);
        let rules = IntervalRuleSet::new(
            3,
            2,
            vec![
                Rule::new(0, vec![Condition::new(0, a, a + r(1.0, 3.0)), Condition::at_most(1, r(0.0, 1.5))]),
                Rule::new(1, vec![Condition::new(0, r(0.5, 1.5), r(2.0, 4.0))]),
                Rule::new(2, vec![Condition::at_least(1, r(1.0, 2.5))]),
            ],
            0,
        )
        .map_err(|e| e.to_string())?;
        let rho = r(0.03, 0.2);
        let loss = |rules: &IntervalRuleSet, rho: f64| {
            soft_rules_loss(rules, &UncertaintyProfile::new(rho).unwrap(), &data).map_err(|e| e.to_string())
        };
        let (_, g) = loss(&rules, rho)?;
        let ends = rules.endpoints();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for (ci, &(a, b)) in ends.iter().enumerate() {
            for side in [0, 1] {
                if !(if side == 0 { a } else { b }).is_finite() {
                    continue;
                }
                let mut fd = [0.0; 2];
                for (slot, delta) in [h, -h].into_iter().enumerate() {
                    let mut e = ends.clone();
                    if side == 0 {
                        e[ci].0 += delta;
                    } else {
                        e[ci].1 += delta;
                    }
                    fd[slot] = loss(&rules.with_endpoints(&e).map_err(|e| e.to_string())?, rho)?.0;
                }
                numeric.push((fd[0] - fd[1]) / (2.0 * h));
                analytic.push(if side == 0 { g.endpoints[ci].0 } else { g.endpoints[ci].1 });
            }
        }
        numeric.push((loss(&rules, rho + h)?.0 - loss(&rules, rho - h)?.0) / (2.0 * h));
        analytic.push(g.rho);
        worst_soft = worst_soft.max(rel_err(&analytic, &numeric));
    }
    check(worst_soft < 1e-4, || format!("soft-rule relative error {worst_soft:.2e}"))?;
    Ok(format!("max relative error: MLP {worst_mlp:.1e}, soft rules {worst_soft:.1e} (20 points each)"))
}

fn run_prop<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new_with_rng(
        PropConfig {
            cases: 128,
            failure_persistence: None,
            ..PropConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn normalized(p: &ClassProbabilities) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && p.iter().all(|v| (0.0..=1.0).contains(v))
}

fn invariant_suites() -> Outcome {
    let train = Dataset::with_computed_ranges(
        "toy",
        vec!["a".into(), "b".into(), "c".into()],
        vec!["u".into(), "v".into()],
        (0..30).map(|i| vec![(i % 3) as f64 + 0.1 * (i as f64).sin(), (i % 5) as f64]).collect(),
        (0..30).map(|i| i % 3).collect(),
    )
    .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let (mlp, _) = train_mlp(&train, 3, &cfg).map_err(|e| e.to_string())?;
    let knn = KnnModel::fit(&train, 3, Metric::Manhattan, KnnMode::Vote).map_err(|e| e.to_string())?;
    let rules = IntervalRuleSet::new(
        3,
        2,
        vec![
            Rule::new(0, vec![Condition::at_most(0, 0.5)]),
            Rule::new(1, vec![Condition::new(0, 0.5, 1.5), Condition::at_most(1, 3.0)]),
            Rule::new(2, vec![Condition::at_least(0, 1.5)]),
        ],
        1,
    )
    .map_err(|e| e.to_string())?;
    let models = vec![
        Model::Mlp(mlp.clone()),
        Model::Knn(knn.clone()),
        Model::Rules(rules.clone()),
        Model::Committee(Committee::new(vec![Model::Mlp(mlp), Model::Knn(knn)]).unwrap()),
    ];
    let lda = LinearLogisticModel::new(vec![1.0, -0.5], 0.2, 3.0).unwrap();
    let features = train.features.clone();
    let mut count = 0;

    run_prop("normalization", (-5.0f64..8.0, -5.0f64..8.0, 0.0f64..0.3), |(u, v, rho)| {
        let x = [u, v];
        let s = dispersions(&UncertaintyProfile::new(rho).unwrap(), &features).unwrap();
        for m in &models {
            prop_assert!(normalized(&m.predict(&x).unwrap()));
            prop_assert!(normalized(&mc_probabilities(m, &x, &s, &McConfig::new(64, 1).unwrap()).unwrap().probs));
        }
        prop_assert!(normalized(&lda.predict(&x).unwrap()));
        prop_assert!(normalized(&soft_rules_predict(&rules, &x, &s).unwrap()));
        Ok(())
    })?;
    count += 1;

    run_prop("rho=0 reductions", (-5.0f64..8.0, -5.0f64..8.0), |(u, v)| {
        let x = [u, v];
        let zero = [0.0, 0.0];
        for m in &models {
            let exact = m.predict(&x).unwrap();
            prop_assert_eq!(&mc_probabilities(m, &x, &zero, &McConfig::default()).unwrap().probs, &exact);
            let sweep = rho_sweep(m, &x, &features, &[0.0], &McConfig::default()).unwrap();
            prop_assert_eq!(&sweep.rows[0].probs, &exact);
        }
        prop_assert_eq!(soft_rules_predict(&rules, &x, &zero).unwrap(), rules_predict(&rules, &x).unwrap());
        Ok(())
    })?;
    count += 1;

    let probe = sample_mixture(
        &GaussianMixtureSpec::isotropic(vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 0.0]], 1.0, 4),
        120,
    )
    .map_err(|e| e.to_string())?;
    for m in &models {
        let mut prev = 0.0;
        for k in 1..=3 {
            let a = relaxed_accuracy(m, &probe, k).map_err(|e| e.to_string())?;
            check(a >= prev, || format!("relaxed accuracy drops at k={k}"))?;
            prev = a;
        }
        check(prev == 1.0, || "relaxed accuracy at k=K is not 1".into())?;
        check(predict_all(m, &probe).is_ok(), || "prediction failed".into())?;
    }
    count += 1;

    run_prop("kappa/tau endpoints", prop::collection::vec(1u64..60, 2..6), |diag| {
        let k = diag.len();
        let counts: Vec<Vec<u64>> = (0..k).map(|i| (0..k).map(|j| if i == j { diag[i] } else { 0 }).collect()).collect();
        let cm = ConfusionMatrix::from_counts(counts).unwrap();
        prop_assert!((kappa(&cm).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((tau(&cm, None).unwrap() - 1.0).abs() < 1e-12);
        // predicting the most frequent class everywhere hits the base rate
        let major = (0..k).max_by_key(|&i| (diag[i], std::cmp::Reverse(i))).unwrap();
        let mut constant = vec![vec![0u64; k]; k];
        constant[major] = diag.clone();
        let cm = ConfusionMatrix::from_counts(constant).unwrap();
        prop_assert!(tau(&cm, None).unwrap().abs() < 1e-12);
        Ok(())
    })?;
    count += 1;

    run_prop("z antisymmetry", (-1.0f64..1.0, 0.0f64..0.01, -1.0f64..1.0, 1e-6f64..0.01), |(t1, v1, t2, v2)| {
        let a = z_score(t1, v1, t2, v2).unwrap().z;
        let b = z_score(t2, v2, t1, v1).unwrap().z;
        prop_assert!((a + b).abs() <= 1e-12);
        Ok(())
    })?;
    count += 1;

    let prob_strategy = (2usize..8).prop_flat_map(|k| prop::collection::vec(-10.0f64..10.0, k));
    run_prop("verdicts", (prob_strategy, 0.5f64..1.0, 0.0f64..0.5, 1usize..8), |(logits, accept, retain, max)| {
        let p = ClassProbabilities::from_log_scores(&logits);
        let v = eliminate(&p, &EliminationPolicy::new(accept, retain, max).unwrap());
        prop_assert!(v.retains(p.argmax()));
        let mut all: Vec<usize> = v.retained_classes().into_iter().chain(v.eliminated_classes()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..p.len()).collect::<Vec<_>>());
        Ok(())
    })?;
    count += 1;

    Ok(format!("{count} suites passed"))
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("posterior oracle agreement", Duration::from_secs(60), posterior_oracle),
        ("logistic vs Gaussian soft rule", Duration::from_secs(5), logistic_vs_gaussian),
        ("metrics on the printed confusion matrix", Duration::from_secs(1), printed_matrix),
        ("joint-class gain", Duration::from_secs(120), joint_class_gain),
        ("rejection-curve properties", Duration::from_secs(60), rejection_properties),
        ("gradient checks", Duration::from_secs(60), gradient_checks),
        ("invariant suites", Duration::from_secs(120), invariant_suites),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
