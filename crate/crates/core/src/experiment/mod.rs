//! End-to-end evaluation protocol: folds, training, per-group scoring,
//! paired comparisons and result files.

mod config;
pub mod output;
pub mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{CorpusSource, ExperimentConfig, ModelKind, TrainingConfig};
use output::{
    PValueRow, PredictionRow, ResultRow, ScoreRow, SignificanceSummaryRow, SupportRow, SupportSummaryRow,
};

use crate::corpus::{
    self, build_group_scheme, corpus_stats, shuffle_group_scheme, AnnotationRecord, BinaryLabel, Corpus,
    GroupScheme,
};
use crate::error::{Error, Result};
use crate::evalsplit::{
    evaluable_test_annotations, evaluate_by_group, macro_f1_labels, mean_std, support_stats, FoldPlan,
    MajorityToxic, PredictionRecord,
};
use crate::features::FeatureTable;
use crate::model::{self, ModelConfig, TrainedModel};
use crate::seed::derive_seed;
use crate::stats::{paired_bootstrap, BootstrapConfig, FoldPValue, PairedItem, SignificanceReport};
use crate::synthgen;

const TAG_SHUFFLE: u64 = 0x5348;
const TAG_TRAIN: u64 = 0x5452;
const TAG_BOOTSTRAP: u64 = 0x4253;

/// The two comparison families, as (name, model A, model B).
pub const COMPARISONS: [(&str, ModelKind, ModelKind); 2] = [
    ("sociodemographic_vs_baseline", ModelKind::Sociodemographic, ModelKind::Baseline),
    ("sociodemographic_vs_random", ModelKind::Sociodemographic, ModelKind::Random),
];

/// Everything written by [`run_experiment`], kept in memory for callers.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub plan: FoldPlan,
    pub scores: Vec<ScoreRow>,
    pub results: Vec<ResultRow>,
    pub p_values: Vec<PValueRow>,
    pub significance: Vec<SignificanceSummaryRow>,
    pub support: Vec<SupportRow>,
    pub support_summary: Vec<SupportSummaryRow>,
    pub summary: String,
    pub files: Vec<String>,
}

pub fn load_corpus_source(source: &CorpusSource) -> Result<Corpus> {
    match source {
        CorpusSource::Files { paths, ingest, sample } => {
            let corpus = corpus::load_corpus(paths, ingest)?;
            match sample {
                Some((target, seed)) => corpus::sample_to_annotator_target(&corpus, *target, *seed),
                None => Ok(corpus),
            }
        }
        CorpusSource::Synthetic(spec) => Ok(synthgen::generate_population(spec)?.0),
    }
}

/// Test annotations of one run and fold.
struct FoldData<'c> {
    run_seed: u64,
    fold: usize,
    train: Vec<&'c AnnotationRecord>,
    kept: Vec<&'c AnnotationRecord>,
    skipped: Vec<&'c str>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    model: ModelKind,
    /// Attribute index for the group models.
    attr: Option<usize>,
    fold_data: usize,
}

/// Output files written so far, in order.
struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn rows<T: serde::Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name);
        output::write_rows(&p, rows)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        output::write_text(&p, text)
    }

    fn manifest(&self, error: Option<&Error>) -> Result<()> {
        let mut text = String::new();
        match error {
            None => text.push_str("status=complete\n"),
            Some(e) => {
                text.push_str("status=incomplete\n");
                let _ = writeln!(text, "error={}", e.to_string().replace('\n', " "));
            }
        }
        for f in &self.files {
            let _ = writeln!(text, "file={f}");
        }
        output::write_text(&self.dir.join(output::MANIFEST_FILE), &text)
    }
}

/// Runs the full protocol and writes its result files. `jobs` bounds the
/// worker threads (0 picks the number of CPUs). On failure, files written
/// so far stay in place and the MANIFEST records the error.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut writer = Writer {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start {jobs} worker threads: {e}")))?;
    let result = pool.install(|| run_inner(cfg, &mut writer));
    match result {
        Ok(mut outcome) => {
            writer.manifest(None)?;
            outcome.files = writer.files;
            Ok(outcome)
        }
        Err(e) => {
            if let Err(m) = writer.manifest(Some(&e)) {
                log::error!("could not write MANIFEST: {m}");
            }
            Err(e)
        }
    }
}

fn run_inner(cfg: &ExperimentConfig, writer: &mut Writer) -> Result<ExperimentOutcome> {
    let corpus = load_corpus_source(&cfg.corpus).map_err(|e| e.context("loading corpus"))?;
    let stats = corpus_stats(&corpus);
    log::info!(
        "corpus: {} annotations, {} annotators, {} comments",
        stats.annotations,
        stats.annotators,
        stats.comments
    );
    let features = FeatureTable::build(&corpus, &cfg.features, cfg.features_path.as_deref())
        .map_err(|e| e.context("building features"))?;

    let plan = FoldPlan::new(&corpus, cfg.k, &cfg.run_seeds)?;
    let p = writer.path(output::FOLDS_FILE);
    output::write_atomic(&p, |tmp| plan.write_csv(tmp))?;

    let mut true_schemes = Vec::new();
    let mut shuffled: BTreeMap<(usize, u64), GroupScheme> = BTreeMap::new();
    std::fs::create_dir_all(cfg.output_dir.join("schemes")).map_err(|e| Error::io(&cfg.output_dir, e))?;
    for (ai, attr) in cfg.attributes.iter().enumerate() {
        let scheme = build_group_scheme(&corpus, attr)?;
        let name = format!("schemes/{}_true.csv", output::sanitize(attr));
        let p = writer.path(&name);
        output::write_atomic(&p, |tmp| scheme.write_csv(tmp))?;
        if cfg.has(ModelKind::Random) {
            for &run_seed in &cfg.run_seeds {
                let seed = derive_seed(cfg.seed, &[TAG_SHUFFLE, run_seed, ai as u64]);
                let s = shuffle_group_scheme(&scheme, seed, cfg.shuffle_mode);
                let name = format!("schemes/{}_shuffled_{run_seed}.csv", output::sanitize(attr));
                let p = writer.path(&name);
                output::write_atomic(&p, |tmp| s.write_csv(tmp))?;
                shuffled.insert((ai, run_seed), s);
            }
        }
        true_schemes.push(scheme);
    }

    let mut folds = Vec::new();
    for run in &plan.runs {
        for fold in 0..plan.k {
            let (train, test) = run.split(&corpus, fold);
            let (kept, skipped) = evaluable_test_annotations(&train, &test);
            folds.push(FoldData {
                run_seed: run.seed,
                fold,
                train,
                kept,
                skipped: skipped.iter().map(|r| r.annotator_id.as_str()).collect(),
            });
        }
    }

    let mut job_list = Vec::new();
    for fi in 0..folds.len() {
        for &m in &cfg.models {
            match m.mode() {
                Some(mode) if mode.uses_groups() => {
                    job_list.extend((0..cfg.attributes.len()).map(|ai| Job {
                        model: m,
                        attr: Some(ai),
                        fold_data: fi,
                    }));
                }
                _ => job_list.push(Job {
                    model: m,
                    attr: None,
                    fold_data: fi,
                }),
            }
        }
    }
    if cfg.save_checkpoints {
        std::fs::create_dir_all(cfg.output_dir.join("checkpoints")).map_err(|e| Error::io(&cfg.output_dir, e))?;
    }

    let predictions: Vec<Vec<BinaryLabel>> = job_list
        .par_iter()
        .map(|job| {
            let fd = &folds[job.fold_data];
            let scheme = job.attr.map(|ai| match job.model {
                ModelKind::Random => &shuffled[&(ai, fd.run_seed)],
                _ => &true_schemes[ai],
            });
            run_job(cfg, job, fd, scheme, &features).map_err(|e| {
                let attr = job.attr.map(|ai| format!(" attribute {}", cfg.attributes[ai])).unwrap_or_default();
                e.context(format!(
                    "run {} fold {} model {}{attr}",
                    fd.run_seed,
                    fd.fold,
                    job.model.tag()
                ))
            })
        })
        .collect::<Result<_>>()?;

    // Predictions keyed by (model, attribute index, fold data index).
    let mut by_key: BTreeMap<(ModelKind, usize, usize), &[BinaryLabel]> = BTreeMap::new();
    for (job, preds) in job_list.iter().zip(&predictions) {
        match job.attr {
            Some(ai) => {
                by_key.insert((job.model, ai, job.fold_data), preds);
            }
            None => {
                for ai in 0..cfg.attributes.len() {
                    by_key.insert((job.model, ai, job.fold_data), preds);
                }
            }
        }
    }

    let mut scores = Vec::new();
    let mut results = Vec::new();
    let mut support = Vec::new();
    let mut support_summary = Vec::new();
    let mut p_values = Vec::new();
    let mut significance = Vec::new();

    for (ai, attr) in cfg.attributes.iter().enumerate() {
        let scheme = &true_schemes[ai];

        // Per-fold scores, grouped as (group, model) -> rows.
        let mut cells: BTreeMap<(usize, usize), Vec<ScoreRow>> = BTreeMap::new();
        let mut pred_rows = Vec::new();
        for (mi, &m) in cfg.models.iter().enumerate() {
            for (fi, fd) in folds.iter().enumerate() {
                let preds = by_key[&(m, ai, fi)];
                let records: Vec<PredictionRecord> = fd
                    .kept
                    .iter()
                    .zip(preds)
                    .map(|(r, &p)| PredictionRecord {
                        comment_id: r.comment_id.clone(),
                        annotator_id: r.annotator_id.clone(),
                        gold: r.label(),
                        predicted: p,
                    })
                    .collect();
                for (g, s) in evaluate_by_group(&records, scheme, &fd.skipped)? {
                    cells.entry((g, mi)).or_default().push(ScoreRow {
                        attribute: attr.clone(),
                        group: scheme.group_name(g).to_string(),
                        model: m.tag().to_string(),
                        run_seed: fd.run_seed,
                        fold_index: fd.fold,
                        macro_f1: s.macro_f1,
                        support: s.support,
                        skipped: s.skipped_annotations,
                    });
                }
                if cfg.write_predictions {
                    pred_rows.extend(records.into_iter().map(|r| PredictionRow {
                        run_seed: fd.run_seed,
                        fold_index: fd.fold,
                        comment_id: r.comment_id,
                        annotator_id: r.annotator_id,
                        gold: r.gold.as_str().to_string(),
                        pred: r.predicted.as_str().to_string(),
                        model_tag: m.tag().to_string(),
                    }));
                }
            }
        }
        if cfg.write_predictions {
            writer.rows(&output::predictions_file(attr), &pred_rows)?;
        }
        for ((g, mi), rows) in cells {
            let f1s: Vec<f64> = rows.iter().map(|r| r.macro_f1).collect();
            let sup: Vec<f64> = rows.iter().map(|r| r.support as f64).collect();
            let (mean, std) = mean_std(&f1s);
            results.push(ResultRow {
                attribute: attr.clone(),
                group: scheme.group_name(g).to_string(),
                model: cfg.models[mi].tag().to_string(),
                mean_macro_f1: mean,
                std_macro_f1: std,
                n_folds: rows.len(),
                mean_support: mean_std(&sup).0,
            });
            scores.extend(rows);
        }

        for (g, s) in support_stats(&plan, scheme, &corpus)? {
            let group = scheme.group_name(g).to_string();
            support.extend(s.folds.iter().map(|f| SupportRow {
                attribute: attr.clone(),
                group: group.clone(),
                run_seed: f.run_seed,
                fold_index: f.fold,
                support: f.support,
                skipped: f.skipped,
            }));
            support_summary.push(SupportSummaryRow {
                attribute: attr.clone(),
                group,
                mean: s.mean,
                std: s.std,
                min: s.min,
                max: s.max,
            });
        }

        let comparisons: Vec<(usize, &str, ModelKind, ModelKind)> = COMPARISONS
            .iter()
            .enumerate()
            .filter(|(_, (_, a, b))| cfg.has(*a) && cfg.has(*b))
            .map(|(ci, &(name, a, b))| (ci, name, a, b))
            .collect();
        for g in 0..scheme.n_groups() {
            for &(ci, name, a, b) in &comparisons {
                let tests: Vec<(usize, Vec<PairedItem>)> = folds
                    .iter()
                    .enumerate()
                    .map(|(fi, fd)| {
                        let pa = by_key[&(a, ai, fi)];
                        let pb = by_key[&(b, ai, fi)];
                        let items = fd
                            .kept
                            .iter()
                            .enumerate()
                            .filter(|(_, r)| scheme.group_of(&r.annotator_id) == Some(g))
                            .map(|(i, r)| PairedItem {
                                gold: r.label(),
                                pred_a: pa[i],
                                pred_b: pb[i],
                            })
                            .collect();
                        (fi, items)
                    })
                    .filter(|(_, items): &(usize, Vec<PairedItem>)| !items.is_empty())
                    .collect();
                let folds_p: Vec<FoldPValue> = tests
                    .par_iter()
                    .map(|(fi, items)| {
                        let fd = &folds[*fi];
                        let boot = BootstrapConfig {
                            seed: derive_seed(
                                cfg.seed,
                                &[TAG_BOOTSTRAP, ai as u64, g as u64, ci as u64, fd.run_seed, fd.fold as u64],
                            ),
                            ..cfg.bootstrap.clone()
                        };
                        let p = paired_bootstrap(items, macro_f1_labels, &boot)?;
                        Ok(FoldPValue {
                            run_seed: fd.run_seed,
                            fold: fd.fold,
                            p_value: p,
                        })
                    })
                    .collect::<Result<_>>()?;
                if folds_p.is_empty() {
                    continue;
                }
                let group = scheme.group_name(g).to_string();
                p_values.extend(folds_p.iter().map(|f| PValueRow {
                    attribute: attr.clone(),
                    group: group.clone(),
                    comparison: name.to_string(),
                    run_seed: f.run_seed,
                    fold_index: f.fold,
                    p_value: f.p_value,
                }));
                let report = SignificanceReport::new(folds_p, cfg.bootstrap.alpha);
                significance.push(SignificanceSummaryRow {
                    attribute: attr.clone(),
                    group,
                    comparison: name.to_string(),
                    significant_count: report.significant_count,
                    bonferroni_count: report.bonferroni_count,
                });
            }
        }
    }

    writer.rows(output::SCORES_FILE, &scores)?;
    writer.rows(output::RESULTS_FILE, &results)?;
    writer.rows(output::SUPPORT_FILE, &support)?;
    writer.rows(output::SUPPORT_SUMMARY_FILE, &support_summary)?;
    if !significance.is_empty() {
        writer.rows(output::SIGNIFICANCE_FILE, &p_values)?;
        writer.rows(output::SIGNIFICANCE_SUMMARY_FILE, &significance)?;
    }

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "# Results\n\n{} annotations, {} annotators, {} comments; {} run(s) x {} folds; alpha {}.\n",
        stats.annotations,
        stats.annotators,
        stats.comments,
        cfg.run_seeds.len(),
        cfg.k,
        cfg.bootstrap.alpha
    );
    summary.push_str("Cells show mean ± std macro-F1; bold marks the highest mean per group.\n\n");
    summary.push_str(&report::render_tables(&results, &significance));
    writer.text(output::SUMMARY_FILE, &summary)?;

    Ok(ExperimentOutcome {
        output_dir: cfg.output_dir.clone(),
        plan,
        scores,
        results,
        p_values,
        significance,
        support,
        support_summary,
        summary,
        files: Vec::new(),
    })
}

/// Trains one model (if trainable) and predicts the fold's evaluable test
/// annotations, in order.
fn run_job(
    cfg: &ExperimentConfig,
    job: &Job,
    fd: &FoldData<'_>,
    scheme: Option<&GroupScheme>,
    features: &FeatureTable,
) -> Result<Vec<BinaryLabel>> {
    let Some(mode) = job.model.mode() else {
        return Ok(fd.kept.iter().map(|_| MajorityToxic.predict()).collect());
    };
    log::debug!("training {} run {} fold {}", job.model.tag(), fd.run_seed, fd.fold);
    let seed = derive_seed(cfg.seed, &[TAG_TRAIN, fd.run_seed, fd.fold as u64]);
    let mut mc = ModelConfig::new(features.dim(), seed);
    if let Some(s) = scheme {
        mc = mc.with_groups(mode, s.clone());
    }
    mc.init = cfg.training.init;
    mc.learning_rate = cfg.training.learning_rate;
    mc.epochs = cfg.training.epochs;
    mc.batch_size = cfg.training.batch_size;
    let trained = model::train(fd.train.iter().copied(), features, &mc)?;
    if cfg.save_checkpoints {
        save_checkpoint(cfg, job, fd, &trained)?;
    }
    fd.kept
        .iter()
        .map(|r| {
            let x = features
                .get(&r.comment_id)
                .ok_or_else(|| Error::data(format!("no features for comment `{}`", r.comment_id)))?;
            trained.predict(x, &r.annotator_id)
        })
        .collect()
}

fn save_checkpoint(cfg: &ExperimentConfig, job: &Job, fd: &FoldData<'_>, trained: &TrainedModel) -> Result<()> {
    let attr = job
        .attr
        .map(|ai| format!("_{}", output::sanitize(&cfg.attributes[ai])))
        .unwrap_or_default();
    let name = format!("{}{attr}_{}_{}.ckpt", job.model.tag(), fd.run_seed, fd.fold);
    let path = cfg.output_dir.join("checkpoints").join(name);
    output::write_atomic(&path, |tmp| model::write_checkpoint(trained, tmp))
}

/// Checks that a results directory holds a complete run.
pub fn is_complete(dir: &Path) -> bool {
    std::fs::read_to_string(dir.join(output::MANIFEST_FILE))
        .map(|m| m.lines().next() == Some("status=complete"))
        .unwrap_or(false)
}
