use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::corpus::{AnnotationRecord, Rating};
use crate::features::FeatureTable;

fn scheme(assign: &[(&str, usize)], n_groups: usize) -> GroupScheme {
    GroupScheme::new(
        "attr",
        (0..n_groups).map(|g| format!("g{g}")).collect(),
        assign.iter().map(|(a, g)| (a.to_string(), *g)).collect(),
    )
    .unwrap()
}

fn ids(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn random_params(rng: &mut impl Rng, dim: usize, n_groups: usize, n_heads: usize) -> ModelParams {
    let annotators: Vec<String> = (0..n_heads).map(|i| format!("a{i}")).collect();
    let head_group = if n_groups == 0 {
        Vec::new()
    } else {
        (0..n_heads).map(|i| i % n_groups).collect()
    };
    let mut p = ModelParams::zeros(dim, n_groups, annotators, head_group).unwrap();
    for v in p.values_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    p
}

fn item_loss(p: &ModelParams, x: &[f64], a: &str, y: BinaryLabel, w: f64) -> f64 {
    loss(p.logits(x, a).unwrap(), y, w)
}

/// Largest relative deviation between analytic and central-difference partials.
fn max_fd_error(p: &ModelParams, x: &[f64], a: &str, y: BinaryLabel, w: f64) -> f64 {
    let eps = 1e-4;
    let g = p.gradients(x, a, y, w).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..p.values().len() {
        let mut plus = p.clone();
        plus.values_mut()[i] += eps;
        let mut minus = p.clone();
        minus.values_mut()[i] -= eps;
        let numeric = (item_loss(&plus, x, a, y, w) - item_loss(&minus, x, a, y, w)) / (2.0 * eps);
        let analytic = g.values()[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

#[test]
fn identity_group_matches_baseline() {
    let sch = scheme(&[("a", 0), ("b", 1)], 2);
    let base = ModelConfig::new(4, 9);
    let socio = ModelConfig {
        init: InitScheme::IdentityGroup,
        ..base.clone().with_groups(ModelMode::Sociodemographic, sch)
    };
    let pb = ModelParams::init(&base, &ids(&["a", "b"])).unwrap();
    let ps = ModelParams::init(&socio, &ids(&["a", "b"])).unwrap();
    let mut rng = crate::seed::rng(1);
    for _ in 0..100 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        for a in ["a", "b"] {
            let lb = pb.logits(&x, a).unwrap();
            let ls = ps.logits(&x, a).unwrap();
            assert_eq!(lb.map(f64::to_bits), ls.map(f64::to_bits));
        }
    }
}

#[test]
fn bias_only_path() {
    let mut p = ModelParams::zeros(3, 1, ids(&["a"]), vec![0]).unwrap();
    p.head_bias_mut(0).copy_from_slice(&[0.3, -0.2]);
    p.head_weight_mut(0).fill(0.7);
    p.group_weight_mut(0).fill(1.5);
    assert_eq!(p.logits(&[0.0; 3], "a").unwrap(), [0.3, -0.2]);
}

#[test]
fn hand_computed_two_dimensional_forward() {
    let mut p = ModelParams::zeros(2, 1, ids(&["a"]), vec![0]).unwrap();
    p.group_weight_mut(0).copy_from_slice(&[1.0, 2.0, 0.0, 1.0]);
    p.group_bias_mut(0).copy_from_slice(&[1.0, 0.0]);
    p.head_weight_mut(0).copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    // h = W x + b = (1 + 2 + 1, 0 + 1 + 0) = (4, 1)
    assert_eq!(p.logits(&[1.0, 1.0], "a").unwrap(), [4.0, 1.0]);
}

#[test]
fn forward_errors() {
    let p = ModelParams::zeros(2, 0, ids(&["a"]), vec![]).unwrap();
    assert!(matches!(p.logits(&[0.0, 0.0], "zz"), Err(Error::MissingHead(_))));
    assert!(matches!(p.logits(&[0.0], "a"), Err(Error::Input(_))));
}

#[test]
fn class_weight_examples() {
    let mut recs = Vec::new();
    for _ in 0..10 {
        recs.push(("bal", BinaryLabel::Toxic));
        recs.push(("bal", BinaryLabel::NonToxic));
    }
    for _ in 0..20 {
        recs.push(("tox", BinaryLabel::Toxic));
    }
    recs.push(("one", BinaryLabel::Toxic));
    let w = class_weights(recs);
    assert_eq!(w.get("bal").unwrap(), [20.0 / 22.0, 20.0 / 22.0]);
    assert!((w.get("bal").unwrap()[0] - 10.0 / 11.0).abs() < 1e-15);
    assert_eq!(w.get("tox").unwrap(), [10.0, 20.0 / 42.0]);
    let one = w.get("one").unwrap();
    assert_eq!(one, [0.5, 0.25]);
    assert!(one.iter().all(|v| v.is_finite()));
}

#[test]
fn loss_examples() {
    assert!((loss([0.0, 0.0], BinaryLabel::Toxic, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((loss([0.0, 0.0], BinaryLabel::NonToxic, 1.0) - 0.6931).abs() < 1e-4);
    assert_eq!(loss([3.0, -1.0], BinaryLabel::Toxic, 0.0), 0.0);
    let expected = (1.0 + 2f64.exp()).ln(); // -log(e^0 / (e^2 + e^0))
    let got = loss([2.0, 0.0], BinaryLabel::Toxic, 1.0);
    assert!((got - expected).abs() < 1e-14);
    assert!((got - 2.1269).abs() < 1e-4);
    // max-shift keeps extreme logits finite
    assert!(loss([1000.0, -1000.0], BinaryLabel::Toxic, 1.0).is_finite());
}

#[test]
fn gradient_of_uniform_logits() {
    let p = ModelParams::zeros(2, 0, ids(&["a"]), vec![]).unwrap();
    let g = p.gradients(&[0.0, 0.0], "a", BinaryLabel::Toxic, 1.0).unwrap();
    assert_eq!(g.head_bias(0), [0.5, -0.5]);
}

#[test]
fn zero_weight_zero_gradient() {
    let mut rng = crate::seed::rng(4);
    let p = random_params(&mut rng, 3, 2, 3);
    let g = p.gradients(&[0.3, -0.1, 0.9], "a1", BinaryLabel::NonToxic, 0.0).unwrap();
    assert!(g.values().iter().all(|&v| v == 0.0));
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = crate::seed::rng(2024);
    for case in 0..30 {
        let dim = [2, 3, 5, 8][case % 4];
        let n_groups = case % 3; // 0 = baseline
        let p = random_params(&mut rng, dim, n_groups, 3);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = format!("a{}", case % 3);
        let y = BinaryLabel::from_index(case % 2);
        let w = rng.random_range(0.2..3.0);
        let err = max_fd_error(&p, &x, &a, y, w);
        assert!(err < 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn gradients_are_local() {
    let mut rng = crate::seed::rng(8);
    let p = random_params(&mut rng, 4, 2, 4);
    // a1 uses group 1
    let g = p.gradients(&[0.5, -0.5, 0.25, 1.0], "a1", BinaryLabel::Toxic, 1.3).unwrap();
    for head in [0, 2, 3] {
        assert!(g.head_weight(head).iter().chain(g.head_bias(head)).all(|&v| v == 0.0));
    }
    assert!(g.group_weight(0).iter().chain(g.group_bias(0)).all(|&v| v == 0.0));
    assert!(g.group_weight(1).iter().any(|&v| v != 0.0));
    assert!(g.head_weight(1).iter().any(|&v| v != 0.0));
}

proptest! {
    #[test]
    fn softmax_and_loss_are_sane(l0 in -50.0f64..50.0, l1 in -50.0f64..50.0, w in 0.0f64..5.0, y in 0usize..2) {
        let p = softmax([l0, l1]);
        prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        prop_assert!(loss([l0, l1], BinaryLabel::from_index(y), w) >= 0.0);
    }
}

#[test]
fn tie_goes_to_toxic() {
    assert_eq!(predict_from_logits([0.1, 0.9]), BinaryLabel::Toxic);
    assert_eq!(predict_from_logits([0.9, 0.1]), BinaryLabel::NonToxic);
    assert_eq!(predict_from_logits([0.5, 0.5]), BinaryLabel::Toxic);
}

#[test]
fn parameter_counts() {
    let c = param_count(768, ModelMode::Sociodemographic, 3, 10);
    assert_eq!(c.group_layer, 590_592);
    assert_eq!(c.head, 1_538);
    assert_eq!(c.total, 3 * 590_592 + 10 * 1_538);
    let c = param_count(2, ModelMode::Baseline, 3, 1);
    assert_eq!((c.group_layer, c.head, c.total), (6, 6, 6));
    assert_eq!(
        param_count(16, ModelMode::Random, 4, 7),
        param_count(16, ModelMode::Sociodemographic, 4, 7)
    );
}

#[test]
fn initialised_sizes_match_counts() {
    let sch = scheme(&[("a", 0), ("b", 1), ("c", 2)], 3);
    let cfg = ModelConfig::new(5, 0).with_groups(ModelMode::Random, sch);
    let p = ModelParams::init(&cfg, &ids(&["a", "b", "c"])).unwrap();
    assert_eq!(p.values().len(), param_count(5, ModelMode::Random, 3, 3).total);
    let limit = (6.0f64 / 7.0).sqrt();
    assert!(p.head_weight(0).iter().all(|v| v.abs() <= limit));
    assert!(p.head_bias(0).iter().all(|&v| v == 0.0));
    assert!(p.group_bias(1).iter().all(|&v| v == 0.0));
}

/// One annotator, two points per class on either side of x0 = 0.
fn separable_toy() -> (Vec<AnnotationRecord>, FeatureTable) {
    let pts = [
        ("c0", [1.0, 0.2], 3),
        ("c1", [0.8, -0.5], 4),
        ("c2", [-0.9, 0.1], 0),
        ("c3", [-0.7, -0.6], 1),
        ("c4", [0.3, 0.9], 2),
        ("c5", [-0.2, 0.8], 0),
    ];
    let recs = pts
        .iter()
        .map(|(c, _, r)| AnnotationRecord::new(*c, "solo", Rating::new(*r).unwrap()))
        .collect();
    let feats = pts.iter().map(|(c, x, _)| (c.to_string(), x.to_vec())).collect::<BTreeMap<_, _>>();
    (recs, FeatureTable::new(2, feats).unwrap())
}

#[test]
fn separable_toy_is_learned() {
    let (recs, feats) = separable_toy();
    let cfg = ModelConfig {
        learning_rate: 0.05,
        epochs: 200,
        batch_size: 2,
        ..ModelConfig::new(2, 3)
    };
    let m = train(&recs, &feats, &cfg).unwrap();
    for r in &recs {
        assert_eq!(m.predict(feats.get(&r.comment_id).unwrap(), "solo").unwrap(), r.label());
    }
    assert!(m.loss_trace.last().unwrap() < &m.loss_trace[0]);
}

#[test]
fn training_is_bitwise_deterministic() {
    let (recs, feats) = separable_toy();
    let sch = scheme(&[("solo", 0)], 1);
    let cfg = ModelConfig {
        learning_rate: 0.01,
        epochs: 5,
        ..ModelConfig::new(2, 11).with_groups(ModelMode::Sociodemographic, sch)
    };
    let a = train(&recs, &feats, &cfg).unwrap();
    let b = train(&recs, &feats, &cfg).unwrap();
    let bits = |m: &TrainedModel| m.params.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.loss_trace, b.loss_trace);
}

#[test]
fn training_contract_errors() {
    let (recs, feats) = separable_toy();
    let cfg = ModelConfig::new(2, 0);
    assert_eq!(cfg.learning_rate, 1e-5);
    assert!(matches!(train(&Vec::<AnnotationRecord>::new(), &feats, &cfg), Err(Error::Config(_))));
    let missing = vec![AnnotationRecord::new("nope", "solo", Rating::new(0).unwrap())];
    assert!(matches!(train(&missing, &feats, &cfg), Err(Error::Data(_))));
    let no_scheme = ModelConfig {
        mode: ModelMode::Sociodemographic,
        ..cfg.clone()
    };
    assert!(matches!(train(&recs, &feats, &no_scheme), Err(Error::Config(_))));
    let bad_lr = ModelConfig {
        learning_rate: 0.0,
        ..cfg
    };
    assert!(matches!(train(&recs, &feats, &bad_lr), Err(Error::Config(_))));
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut adam = Adam::new(2, 0.1);
    let mut p = [1.0, -1.0];
    adam.step(&mut p, &[0.5, -2.0]);
    // bias-corrected first step is lr * sign(g) up to epsilon
    assert!((p[0] - 0.9).abs() < 1e-7);
    assert!((p[1] + 0.9).abs() < 1e-7);
}

#[test]
fn checkpoint_round_trip() {
    let (recs, feats) = separable_toy();
    let sch = scheme(&[("solo", 0), ("other", 1)], 2);
    let cfg = ModelConfig {
        epochs: 2,
        ..ModelConfig::new(2, 5).with_groups(ModelMode::Sociodemographic, sch)
    };
    let m = train(&recs, &feats, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    write_checkpoint(&m, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert!(bytes.starts_with(b"MAML1\n"));
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back, m);

    std::fs::write(&path, b"NOPE\n---\n").unwrap();
    assert!(matches!(read_checkpoint(&path), Err(Error::Data(_))));
}
