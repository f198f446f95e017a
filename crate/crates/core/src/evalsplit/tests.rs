use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::corpus::{build_group_scheme, AnnotatorProfile, Rating};
use crate::synthgen::{generate_population, AttributeSpec, CategorySpec, PopulationSpec};

use BinaryLabel::{NonToxic as N, Toxic as T};

/// Corpus with one single-annotation comment per label in `majorities`.
fn single_vote_corpus(majorities: &[BinaryLabel]) -> Corpus {
    let comments = (0..majorities.len())
        .map(|i| (format!("c{i:05}"), String::new()))
        .collect();
    let annotations = majorities
        .iter()
        .enumerate()
        .map(|(i, l)| {
            AnnotationRecord::new(
                format!("c{i:05}"),
                "a0",
                Rating::new(if l.is_toxic() { 3 } else { 0 }).unwrap(),
            )
        })
        .collect();
    let profiles = vec![AnnotatorProfile {
        id: "a0".into(),
        attributes: BTreeMap::new(),
    }];
    Corpus::new(vec![], comments, profiles, annotations).unwrap()
}

fn synthetic(n_annotators: usize, n_comments: usize, seed: u64) -> Corpus {
    let spec = PopulationSpec {
        n_annotators,
        n_comments,
        annotations_per_comment: 5,
        attributes: vec![AttributeSpec {
            name: "gender".into(),
            categories: vec![
                CategorySpec {
                    name: "F".into(),
                    proportion: 0.5,
                    offset: -0.5,
                },
                CategorySpec {
                    name: "M".into(),
                    proportion: 0.5,
                    offset: 0.5,
                },
            ],
        }],
        sigma_individual: 0.5,
        tau: 0.5,
        mu_t: 0.5244,
        beta0: 0.0,
        seed,
    };
    generate_population(&spec).unwrap().0
}

#[test]
fn majority_examples() {
    assert_eq!(majority_label(&[T, T, T, N, N]).unwrap(), T);
    assert_eq!(majority_label(&[N, N, N, N, T]).unwrap(), N);
    assert_eq!(majority_label(&[T, T, N, N]).unwrap(), T);
    assert!(majority_label(&[]).is_err());
}

#[test]
fn small_stratified_split() {
    let corpus = single_vote_corpus(&[T, T, T, T, T, T, N, N]);
    let blocks = make_folds(&corpus, 4, 1).unwrap();
    let maj = comment_majorities(&corpus);
    let non: Vec<usize> = blocks
        .iter()
        .map(|b| b.iter().filter(|c| maj[c.as_str()] == N).count())
        .collect();
    for b in &blocks {
        assert!(b.iter().any(|c| maj[c.as_str()] == T));
    }
    assert!(non.iter().max().unwrap() - non.iter().min().unwrap() <= 1);
    assert_eq!(blocks, make_folds(&corpus, 4, 1).unwrap());
}

#[test]
fn fold_argument_errors() {
    let corpus = single_vote_corpus(&[T, N, T]);
    assert!(matches!(make_folds(&corpus, 4, 0), Err(Error::Config(_))));
    assert!(matches!(make_folds(&corpus, 1, 0), Err(Error::Config(_))));
}

#[test]
fn stratification_band_at_reported_imbalance() {
    // 7,062 of 10,000 comments toxic by majority = 70.62%.
    let labels: Vec<BinaryLabel> = (0..10_000).map(|i| if i < 7062 { T } else { N }).collect();
    let corpus = single_vote_corpus(&labels);
    let maj = comment_majorities(&corpus);
    for &seed in &DEFAULT_RUN_SEEDS {
        for b in make_folds(&corpus, 4, seed).unwrap() {
            let frac = b.iter().filter(|c| maj[c.as_str()] == T).count() as f64 / b.len() as f64;
            assert!((0.6862..=0.7262).contains(&frac), "{frac}");
        }
    }
}

proptest! {
    #[test]
    fn folds_partition_comments(bits in proptest::collection::vec(any::<bool>(), 4..60), k in 2usize..5, seed in any::<u64>()) {
        prop_assume!(k <= bits.len());
        let labels: Vec<BinaryLabel> = bits.iter().map(|&b| if b { T } else { N }).collect();
        let corpus = single_vote_corpus(&labels);
        let blocks = make_folds(&corpus, k, seed).unwrap();
        let mut all: Vec<&String> = blocks.iter().flatten().collect();
        all.sort();
        let before = all.len();
        all.dedup();
        prop_assert_eq!(before, all.len());
        prop_assert_eq!(all.len(), corpus.comments().len());
        let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn macro_f1_is_order_invariant(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..50), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let recs: Vec<PredictionRecord> = pairs.iter().enumerate().map(|(i, &(g, p))| rec(i, g, p)).collect();
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut crate::seed::rng(seed));
        prop_assert_eq!(macro_f1(&recs).unwrap(), macro_f1(&shuffled).unwrap());
    }

    #[test]
    fn all_toxic_closed_form(n in 2usize..400, frac in 0.01f64..0.99) {
        let toxic = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
        let recs: Vec<PredictionRecord> = (0..n).map(|i| rec(i, i < toxic, true)).collect();
        let p = toxic as f64 / n as f64;
        prop_assert!((macro_f1(&recs).unwrap() - p / (1.0 + p)).abs() < 1e-12);
    }
}

fn rec(i: usize, gold: bool, pred: bool) -> PredictionRecord {
    let l = |b: bool| if b { T } else { N };
    PredictionRecord {
        comment_id: format!("c{i}"),
        annotator_id: format!("a{}", i % 2),
        gold: l(gold),
        predicted: l(pred),
    }
}

#[test]
fn macro_f1_examples() {
    let perfect = vec![rec(0, true, true), rec(1, false, false)];
    assert_eq!(macro_f1(&perfect).unwrap(), 1.0);

    let all_toxic: Vec<PredictionRecord> = (0..10_000).map(|i| rec(i, i < 7010, true)).collect();
    let expected = 0.5 * (2.0 * 0.701 / 1.701);
    let got = macro_f1(&all_toxic).unwrap();
    assert!((got - expected).abs() < 1e-12);
    assert!((got - 0.4121).abs() < 1e-4);

    let mixed = vec![rec(0, true, true), rec(1, true, false), rec(2, false, true), rec(3, false, false)];
    assert_eq!(macro_f1(&mixed).unwrap(), 0.5);
    assert!(macro_f1(&[]).is_err());
}

#[test]
fn zero_support_class_scores_zero() {
    let mut c = Confusion::default();
    c.add(T, T);
    assert_eq!(c.f1(N), 0.0);
    assert_eq!(c.macro_f1(), 0.5);
}

fn two_group_scheme() -> GroupScheme {
    GroupScheme::new(
        "attr",
        vec!["x".into(), "y".into()],
        [("a0".to_string(), 0), ("a1".to_string(), 1)].into(),
    )
    .unwrap()
}

#[test]
fn group_scores() {
    let recs: Vec<PredictionRecord> = (0..20).map(|i| rec(i, i % 3 == 0, i % 4 == 0)).collect();
    let one = GroupScheme::new("attr", vec!["all".into()], [("a0".into(), 0), ("a1".into(), 0)].into()).unwrap();
    let scores = evaluate_by_group(&recs, &one, &[]).unwrap();
    assert_eq!(scores.len(), 1);
    assert_eq!(scores[&0].macro_f1, macro_f1(&recs).unwrap());

    let only_a0: Vec<PredictionRecord> = recs.iter().filter(|r| r.annotator_id == "a0").cloned().collect();
    let scores = evaluate_by_group(&only_a0, &two_group_scheme(), &["a1", "a0"]).unwrap();
    assert_eq!(scores.keys().copied().collect::<Vec<_>>(), vec![0]);
    assert_eq!(scores[&0].support, 10);
    assert_eq!(scores[&0].skipped_annotations, 1);

    let stranger = vec![PredictionRecord {
        annotator_id: "zz".into(),
        ..rec(0, true, true)
    }];
    assert!(evaluate_by_group(&stranger, &two_group_scheme(), &[]).is_err());
}

#[test]
fn group_supports_match_counts() {
    let corpus = synthetic(40, 200, 5);
    let scheme = build_group_scheme(&corpus, "gender").unwrap();
    let recs: Vec<PredictionRecord> = corpus
        .annotations()
        .iter()
        .map(|r| PredictionRecord {
            comment_id: r.comment_id.clone(),
            annotator_id: r.annotator_id.clone(),
            gold: r.label(),
            predicted: T,
        })
        .collect();
    let scores = evaluate_by_group(&recs, &scheme, &[]).unwrap();
    for (g, s) in &scores {
        let expected = corpus
            .annotations()
            .iter()
            .filter(|r| scheme.group_of(&r.annotator_id) == Some(*g))
            .count();
        assert_eq!(s.support, expected);
    }
}

#[test]
fn supports_are_balanced_and_add_up() {
    let corpus = synthetic(100, 2000, 9);
    let scheme = build_group_scheme(&corpus, "gender").unwrap();
    let plan = FoldPlan::new(&corpus, 4, &DEFAULT_RUN_SEEDS).unwrap();
    let stats = support_stats(&plan, &scheme, &corpus).unwrap();
    for (g, summary) in &stats {
        let total = corpus
            .annotations()
            .iter()
            .filter(|r| scheme.group_of(&r.annotator_id) == Some(*g))
            .count();
        assert_eq!(summary.folds.len(), 12);
        for f in &summary.folds {
            let expected = total as f64 / 4.0;
            assert!((f.support as f64 - expected).abs() <= 0.1 * expected);
        }
        for run in &plan.runs {
            let (support, skipped) = summary
                .folds
                .iter()
                .filter(|f| f.run_seed == run.seed)
                .fold((0, 0), |acc, f| (acc.0 + f.support, acc.1 + f.skipped));
            assert_eq!(support, total - skipped);
        }
        assert!(summary.min as f64 <= summary.mean && summary.mean <= summary.max as f64);
    }

    let single = FoldPlan {
        k: 1,
        runs: vec![],
    };
    assert!(matches!(support_stats(&single, &scheme, &corpus), Err(Error::Config(_))));
}

#[test]
fn fold_plan_csv_round_trip() {
    let corpus = synthetic(20, 50, 1);
    let plan = FoldPlan::new(&corpus, 4, &DEFAULT_RUN_SEEDS).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("folds.csv");
    plan.write_csv(&path).unwrap();
    assert_eq!(FoldPlan::read_csv(&path).unwrap(), plan);
}

#[test]
fn unseen_annotators_are_separated() {
    let corpus = synthetic(20, 30, 2);
    let plan = FoldPlan::new(&corpus, 4, &[7]).unwrap();
    let (train, test) = plan.runs[0].split(&corpus, 0);
    assert_eq!(train.len() + test.len(), corpus.annotations().len());
    let test_comments: std::collections::BTreeSet<&str> = test.iter().map(|r| r.comment_id.as_str()).collect();
    assert!(train.iter().all(|r| !test_comments.contains(r.comment_id.as_str())));
    let (kept, skipped) = evaluable_test_annotations(&train, &test);
    assert_eq!(kept.len() + skipped.len(), test.len());
    for r in &skipped {
        assert!(train.iter().all(|t| t.annotator_id != r.annotator_id));
    }
}
