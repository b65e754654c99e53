use super::*;
use crate::features::FeatureRow;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn table(xs: Vec<Vec<f64>>, ys: Vec<u8>) -> FeatureTable {
    let d = xs[0].len();
    let schema = (0..d).map(|j| format!("f{j}")).collect();
    let rows = xs
        .into_iter()
        .zip(ys)
        .enumerate()
        .map(|(i, (values, label))| FeatureRow {
            subject_id: format!("s{i:04}"),
            section_id: 0,
            label,
            values,
        })
        .collect();
    FeatureTable::new(schema, rows).unwrap()
}

/// Two well separated clusters along x0 + x1.
fn separable(n: usize, seed: u64) -> FeatureTable {
    let mut rng = crate::seed::rng(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let y = (i % 2) as u8;
        let shift = if y == 1 { 2.0 } else { -2.0 };
        xs.push(vec![
            shift + rng.gen_range(-1.0..1.0),
            shift + rng.gen_range(-1.0..1.0),
        ]);
        ys.push(y);
    }
    table(xs, ys)
}

/// `d` noise columns; column `planted` is shifted by `effect` for label 1.
fn planted(n: usize, d: usize, planted: usize, effect: f64, seed: u64) -> FeatureTable {
    let mut rng = crate::seed::rng(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        let y = (i % 2) as u8;
        let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        x[planted] += effect * f64::from(y);
        xs.push(x);
        ys.push(y);
    }
    table(xs, ys)
}

fn small_specs() -> Vec<ModelSpec> {
    vec![
        ModelSpec::new(
            Hyperparameters::Gbt(GbtParams {
                trees: 30,
                ..GbtParams::default()
            }),
            1,
        ),
        ModelSpec::new(
            Hyperparameters::RandomForest(ForestParams {
                trees: 30,
                ..ForestParams::default()
            }),
            2,
        ),
        ModelSpec::logistic(3),
        ModelSpec::mlp(4),
    ]
}

fn accuracy(probs: &[f64], labels: &[u8], theta: f64) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, y)| classify(**p, theta) == **y)
        .count();
    hits as f64 / labels.len() as f64
}

#[test]
fn every_kind_separates_a_separable_toy_set() {
    let t = separable(60, 5);
    for spec in small_specs() {
        let m = train(&spec, &t).unwrap();
        let p = predict_proba(&m, &t).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(accuracy(&p, &t.labels(), 0.5), 1.0, "{}", spec.kind());
    }
}

#[test]
fn training_preconditions() {
    let t = separable(10, 1);
    let only_f = FeatureTable::new(
        t.schema.clone(),
        t.rows.iter().filter(|r| r.label == 1).cloned().collect(),
    )
    .unwrap();
    let empty = FeatureTable::new(t.schema.clone(), vec![]).unwrap();
    let mut nan = t.clone();
    nan.rows[3].values[1] = f64::NAN;
    for spec in small_specs() {
        assert!(matches!(train(&spec, &only_f), Err(Error::SingleClass)));
        assert!(matches!(train(&spec, &empty), Err(Error::EmptyTable)));
        assert!(matches!(
            train(&spec, &nan),
            Err(Error::NonFiniteFeature { row: 3, column: 1 })
        ));
    }
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let t = separable(10, 1);
    let spec = ModelSpec::new(
        Hyperparameters::Gbt(GbtParams {
            depth: 0,
            ..GbtParams::default()
        }),
        0,
    );
    assert!(matches!(train(&spec, &t), Err(Error::InvalidHyperparameter(_))));
}

/// Mean log-loss increase when one column is shuffled.
fn permutation_importance(m: &Model, t: &FeatureTable, col: usize, seed: u64) -> f64 {
    let logloss = |t: &FeatureTable| {
        let p = predict_proba(m, t).unwrap();
        p.iter()
            .zip(t.labels())
            .map(|(p, y)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() })
            .sum::<f64>()
            / p.len() as f64
    };
    let mut shuffled = t.clone();
    let mut vals: Vec<f64> = t.rows.iter().map(|r| r.values[col]).collect();
    rand::seq::SliceRandom::shuffle(vals.as_mut_slice(), &mut crate::seed::rng(seed));
    for (r, v) in shuffled.rows.iter_mut().zip(vals) {
        r.values[col] = v;
    }
    logloss(&shuffled) - logloss(t)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[test]
fn gbt_importance_peaks_on_the_planted_feature() {
    let t = planted(200, 12, 7, 1.5, 9);
    let m = train(&ModelSpec::gbt(0), &t).unwrap();
    let imp = m.feature_importance.clone().unwrap();
    assert_eq!(argmax(&imp), 7);
    let perm: Vec<f64> = (0..12).map(|j| permutation_importance(&m, &t, j, 3)).collect();
    assert_eq!(argmax(&perm), 7);
}

#[test]
fn forest_importance_peaks_on_the_planted_feature() {
    let t = planted(200, 12, 4, 1.5, 10);
    let m = train(&ModelSpec::random_forest(0), &t).unwrap();
    assert_eq!(argmax(m.feature_importance.as_ref().unwrap()), 4);
}

#[test]
fn importance_bookkeeping() {
    let mut t = planted(150, 6, 2, 1.0, 11);
    // a constant column can never be split on
    for r in &mut t.rows {
        r.values[5] = 3.0;
    }
    for spec in [ModelSpec::gbt(0), ModelSpec::random_forest(0)] {
        let m = train(&spec, &t).unwrap();
        let imp = m.feature_importance.clone().unwrap();
        assert!(imp.iter().all(|&v| v >= 0.0));
        let (Fitted::Gbt { trees, .. } | Fitted::RandomForest { trees }) = &m.fitted else {
            unreachable!()
        };
        let mut used = [false; 6];
        for tr in trees {
            for (f, _) in tr.splits() {
                used[f] = true;
            }
        }
        for j in 0..6 {
            if !used[j] {
                assert_eq!(imp[j], 0.0);
            }
        }
        assert!(!used[5]);
        if spec.kind() == ModelKind::Gbt {
            let from_nodes: f64 = trees.iter().flat_map(|tr| tr.splits()).map(|(_, g)| g).sum();
            let total: f64 = imp.iter().sum();
            assert!((from_nodes - total).abs() <= 1e-9 * total.max(1.0));
            assert!(trees.iter().all(|tr| tr.depth() <= 3));
        }
    }
}

#[test]
fn training_is_deterministic_and_round_trips() {
    let t = planted(80, 5, 1, 1.0, 12);
    let dir = tempfile::tempdir().unwrap();
    for spec in small_specs() {
        let a = train(&spec, &t).unwrap();
        let b = train(&spec, &t).unwrap();
        assert_eq!(a, b);
        let path = dir.path().join(format!("{}.json", spec.kind()));
        a.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back, a);
        let pa = predict_proba(&a, &t).unwrap();
        let pb = predict_proba(&back, &t).unwrap();
        assert!(pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn seeds_matter_for_randomized_kinds() {
    let t = planted(80, 5, 1, 1.0, 12);
    for spec in [ModelSpec::random_forest(1), ModelSpec::mlp(1)] {
        let a = train(&spec, &t).unwrap();
        let b = train(&spec.with_seed(2), &t).unwrap();
        assert_ne!(a.fitted, b.fitted);
    }
}

#[test]
fn predict_checks_schema_and_duplicates_agree() {
    let t = separable(20, 2);
    let m = train(&ModelSpec::gbt(0), &t).unwrap();
    let mut other = t.clone();
    other.schema[0] = "g0".into();
    assert!(matches!(predict_proba(&m, &other), Err(Error::SchemaMismatch(_))));
    let mut dup = t.clone();
    let mut row = dup.rows[0].clone();
    row.section_id = 1;
    dup.rows.push(row);
    let p = predict_proba(&m, &dup).unwrap();
    assert_eq!(p[0], p[20]);
}

#[test]
fn zero_weight_logistic_scores_one_half() {
    let t = separable(20, 3);
    let mut m = train(&ModelSpec::logistic(0), &t).unwrap();
    if let Fitted::Logistic { weights, bias, .. } = &mut m.fitted {
        weights.iter_mut().for_each(|w| *w = 0.0);
        *bias = 0.0;
    }
    assert!(predict_proba(&m, &t).unwrap().iter().all(|&p| p == 0.5));
}

#[test]
fn logistic_objective_never_increases() {
    for seed in 0..5 {
        let t = planted(120, 8, 3, 0.8, seed);
        let (_, _, _, trace) = linear::fit(&LogisticParams::default(), &t);
        assert!(trace.len() > 2);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }
}

#[test]
fn threshold_rule_is_strict() {
    let th = |v| Threshold::new(v).unwrap();
    assert_eq!(apply_threshold(&[0.5], th(0.5)), vec![0]);
    assert_eq!(apply_threshold(&[0.40], th(0.39)), vec![1]);
    assert_eq!(apply_threshold(&[0.2, 0.7, 0.9], th(0.1)), vec![1, 1, 1]);
    assert!(Threshold::new(0.0).is_err());
    assert!(Threshold::new(1.0).is_err());
    assert!(serde_json::from_str::<Threshold>("1.5").is_err());
}

fn random_mlp(n: usize, d: usize, hidden: usize, seed: u64) -> (Model, FeatureTable) {
    let mut rng = crate::seed::rng(seed);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let ys: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let t = table(xs, ys);
    let spec = ModelSpec::new(
        Hyperparameters::Mlp(MlpParams {
            hidden,
            epochs: 1,
            step: 0.05,
        }),
        seed,
    );
    let m = train(&spec, &t).unwrap();
    let params: Vec<f64> = (0..mlp::n_params(d, hidden))
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    (m.with_mlp_params(params).unwrap(), t)
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let (m, t) = random_mlp(5, 8, 4, 21);
    let (_, g) = mlp_loss_gradient(&m, &t).unwrap();
    let base = m.mlp_params().unwrap().to_vec();
    let h = 1e-5;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let lp = mlp_loss_gradient(&m.with_mlp_params(plus).unwrap(), &t).unwrap().0;
        let lm = mlp_loss_gradient(&m.with_mlp_params(minus).unwrap(), &t).unwrap().0;
        let fd = (lp - lm) / (2.0 * h);
        let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
        assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", g[i]);
    }
}

#[test]
fn zero_network_has_no_output_bias_gradient_on_balanced_labels() {
    let (m, t) = random_mlp(10, 3, 2, 4);
    let zero = m.with_mlp_params(vec![0.0; mlp::n_params(3, 2)]).unwrap();
    let (loss, g) = mlp_loss_gradient(&zero, &t).unwrap();
    assert!((loss - 10.0 * 2f64.ln()).abs() < 1e-12);
    assert!(g.last().unwrap().abs() < 1e-15);
}

#[test]
fn duplicated_rows_double_loss_and_gradient() {
    let (m, t) = random_mlp(6, 4, 3, 8);
    let mut twice = t.clone();
    for r in &t.rows {
        let mut r = r.clone();
        r.section_id = 1;
        twice.rows.push(r);
    }
    let (l1, g1) = mlp_loss_gradient(&m, &t).unwrap();
    let (l2, g2) = mlp_loss_gradient(&m, &twice).unwrap();
    assert!((l2 - 2.0 * l1).abs() <= 1e-12 * l1.abs());
    for (a, b) in g1.iter().zip(&g2) {
        assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs().max(1e-12));
    }
}

#[test]
fn gradient_on_wrong_kind_fails() {
    let t = separable(10, 1);
    let m = train(&ModelSpec::logistic(0), &t).unwrap();
    assert!(matches!(mlp_loss_gradient(&m, &t), Err(Error::WrongKind { .. })));
}

#[test]
fn spec_json_defaults() {
    let s: ModelSpec = serde_json::from_str(r#"{"params":{"kind":"gbt"},"seed":4}"#).unwrap();
    assert_eq!(s, ModelSpec::gbt(4));
    let s: ModelSpec =
        serde_json::from_str(r#"{"params":{"kind":"random_forest","trees":7}}"#).unwrap();
    assert_eq!(s.kind(), ModelKind::RandomForest);
    assert!(serde_json::from_str::<ModelSpec>(r#"{"params":{"kind":"gbt","tres":3}}"#).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn positives_shrink_as_theta_grows(
            probs in prop::collection::vec(0.0f64..=1.0, 1..40),
            a in 0.001f64..0.999,
            b in 0.001f64..0.999,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let count = |t| apply_threshold(&probs, Threshold::new(t).unwrap()).iter().filter(|&&c| c == 1).count();
            prop_assert!(count(hi) <= count(lo));
        }
    }
}
