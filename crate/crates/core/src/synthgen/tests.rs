use super::*;
use crate::corpus::{build_group_scheme, load_corpus, CorpusPaths, IngestOptions};

fn base_spec() -> PopulationSpec {
    PopulationSpec {
        n_annotators: 200,
        n_comments: 400,
        annotations_per_comment: 5,
        attributes: vec![],
        sigma_individual: 0.0,
        tau: 1.0,
        mu_t: 0.0,
        beta0: 0.0,
        seed: 17,
    }
}

fn gender(offset_f: f64, offset_m: f64) -> AttributeSpec {
    AttributeSpec {
        name: "gender".into(),
        categories: vec![
            CategorySpec {
                name: "Female".into(),
                proportion: 0.5,
                offset: offset_f,
            },
            CategorySpec {
                name: "Male".into(),
                proportion: 0.5,
                offset: offset_m,
            },
        ],
    }
}

#[test]
fn probability_examples() {
    assert_eq!(annotation_probability(0.3, 0.3, 1.0).unwrap(), 0.5);
    assert_eq!(annotation_probability(1e6, 0.0, 1.0).unwrap(), 1.0);
    assert_eq!(annotation_probability(f64::INFINITY, 0.0, 1.0).unwrap(), 1.0);
    let expected = 1.0 / (1.0 + (-2.0f64).exp());
    let p = annotation_probability(1.0, 0.0, 0.5).unwrap();
    assert!((p - expected).abs() < 1e-15);
    assert!((p - 0.8808).abs() < 1e-4);
    assert!(matches!(annotation_probability(0.0, 0.0, 0.0), Err(Error::Config(_))));
    assert!(matches!(annotation_probability(0.0, 0.0, -1.0), Err(Error::Config(_))));
}

#[test]
fn noiseless_annotators_agree_with_threshold() {
    let spec = PopulationSpec {
        tau: 1e-12,
        beta0: 0.2,
        ..base_spec()
    };
    let (corpus, latents) = generate_population(&spec).unwrap();
    for rec in corpus.annotations() {
        let t = latents.comment_t[&rec.comment_id];
        assert_eq!(rec.label().is_toxic(), t > 0.2, "comment {}", rec.comment_id);
    }
}

/// Standard normal CDF by composite Simpson integration of the density.
fn normal_cdf(x: f64) -> f64 {
    let lo = -12.0;
    let n = 20_000;
    let h = (x - lo) / n as f64;
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(lo) + pdf(x);
    for i in 1..n {
        let z = lo + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(z);
    }
    s * h / 3.0
}

fn inverse_normal_cdf(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn location_calibrates_toxic_fraction() {
    let mu_t = inverse_normal_cdf(0.70);
    assert!((mu_t - 0.5244).abs() < 1e-4, "{mu_t}");
    let spec = PopulationSpec {
        n_annotators: 500,
        n_comments: 20_000,
        tau: 1e-12,
        mu_t,
        ..base_spec()
    };
    let (corpus, _) = generate_population(&spec).unwrap();
    assert!(corpus.annotations().len() >= 100_000);
    let frac = crate::corpus::corpus_stats(&corpus).toxic_fraction;
    assert!((frac - 0.70).abs() <= 0.01, "{frac}");
}

fn group_thetas(corpus: &Corpus, latents: &Latents) -> (Vec<f64>, Vec<f64>) {
    let scheme = build_group_scheme(corpus, "gender").unwrap();
    let mut by_group = (Vec::new(), Vec::new());
    for (id, &g) in scheme.assignment() {
        let theta = latents.annotator_theta[id];
        if scheme.group_name(g) == "Female" {
            by_group.0.push(theta);
        } else {
            by_group.1.push(theta);
        }
    }
    by_group
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn group_offsets_separate_thresholds() {
    let spec = PopulationSpec {
        attributes: vec![gender(-1.0, 1.0)],
        sigma_individual: 0.05,
        ..base_spec()
    };
    let (corpus, latents) = generate_population(&spec).unwrap();
    let (f, m) = group_thetas(&corpus, &latents);
    assert_eq!((f.len(), m.len()), (100, 100));
    let (mf, sf) = mean_and_se(&f);
    let (mm, sm) = mean_and_se(&m);
    let se = (sf * sf + sm * sm).sqrt();
    assert!(((mm - mf) - 2.0).abs() <= 3.0 * se, "diff {} se {se}", mm - mf);
}

#[test]
fn zero_offsets_give_identical_threshold_distributions() {
    let spec = PopulationSpec {
        n_annotators: 2000,
        n_comments: 2000,
        attributes: vec![gender(0.0, 0.0)],
        sigma_individual: 1.0,
        ..base_spec()
    };
    let (corpus, latents) = generate_population(&spec).unwrap();
    let (f, m) = group_thetas(&corpus, &latents);
    let (mf, sf) = mean_and_se(&f);
    let (mm, sm) = mean_and_se(&m);
    assert!((mf - mm).abs() <= 3.0 * (sf * sf + sm * sm).sqrt());
}

fn toxic_rate(corpus: &Corpus, group: &str) -> f64 {
    let scheme = build_group_scheme(corpus, "gender").unwrap();
    let recs: Vec<_> = corpus
        .annotations()
        .iter()
        .filter(|r| scheme.group_name(scheme.group_of(&r.annotator_id).unwrap()) == group)
        .collect();
    recs.iter().filter(|r| r.label().is_toxic()).count() as f64 / recs.len() as f64
}

#[test]
fn raising_an_offset_lowers_the_toxic_rate() {
    let mut last = f64::INFINITY;
    for offset in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let spec = PopulationSpec {
            attributes: vec![gender(offset, 0.0)],
            sigma_individual: 0.3,
            ..base_spec()
        };
        let (corpus, _) = generate_population(&spec).unwrap();
        let rate = toxic_rate(&corpus, "Female");
        assert!(rate <= last, "offset {offset}: {rate} > {last}");
        last = rate;
    }
}

#[test]
fn loads_are_balanced_and_comments_full() {
    let (corpus, _) = generate_population(&base_spec()).unwrap();
    let stats = crate::corpus::corpus_stats(&corpus);
    assert_eq!(stats.per_comment_histogram, BTreeMap::from([(5, 400)]));
    let mean = stats.per_annotator_mean;
    assert!(stats.per_annotator_min as f64 >= 0.5 * mean);
    assert!(stats.per_annotator_max as f64 <= 1.5 * mean);
    for rec in corpus.annotations() {
        assert!(matches!(rec.rating.value(), 0 | 3));
    }
}

#[test]
fn infeasible_specs_rejected() {
    let spec = PopulationSpec {
        annotations_per_comment: 201,
        ..base_spec()
    };
    assert!(matches!(generate_population(&spec), Err(Error::Config(_))));
    let mut spec = base_spec();
    spec.attributes.push(gender(0.0, 0.0));
    spec.attributes[0].categories[0].proportion = 0.6;
    assert!(matches!(generate_population(&spec), Err(Error::Config(_))));
}

#[test]
fn written_files_are_canonical_and_deterministic() {
    let spec = PopulationSpec {
        attributes: vec![gender(-1.0, 1.0)],
        ..base_spec()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let (corpus, latents) = generate_to_dir(&spec, d1.path()).unwrap();
    generate_to_dir(&spec, d2.path()).unwrap();
    for f in ["annotations.csv", "comments.csv", "annotators.csv", LATENTS_FILE] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let reread = load_corpus(&CorpusPaths::in_dir(d1.path()), &IngestOptions::default()).unwrap();
    assert_eq!(reread, corpus);
    assert_eq!(Latents::read_csv(&d1.path().join(LATENTS_FILE)).unwrap(), latents);
}

#[test]
fn spec_from_config() {
    let cfg = KvConfig::parse(
        "n_annotators = 10\nn_comments = 4\nseed = 3\ntau = 0.5\n\
         attributes.gender = F:0.5:-1, M:0.5:1\n",
    )
    .unwrap();
    let spec = PopulationSpec::from_kv(&cfg, "").unwrap();
    cfg.ensure_all_used().unwrap();
    assert_eq!(spec.annotations_per_comment, 5);
    assert_eq!(spec.attributes[0].categories[1].offset, 1.0);

    let cfg = KvConfig::parse("n_annotators = 10\nn_comments = 4\n").unwrap();
    let err = PopulationSpec::from_kv(&cfg, "").unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("`seed`"));
}

#[test]
fn quotas_follow_largest_remainder() {
    let cats = |ps: &[f64]| {
        ps.iter()
            .map(|&p| CategorySpec {
                name: String::new(),
                proportion: p,
                offset: 0.0,
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(quotas(10, &cats(&[0.5, 0.5])), vec![5, 5]);
    assert_eq!(quotas(10, &cats(&[0.34, 0.33, 0.33])), vec![4, 3, 3]);
    assert_eq!(quotas(7, &cats(&[1.0])), vec![7]);
}
