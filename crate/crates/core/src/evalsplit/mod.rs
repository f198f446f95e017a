//! Cross-validation plans, per-group macro-F1 and support statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::corpus::{AnnotationRecord, BinaryLabel, Corpus, GroupScheme};
use crate::error::{Error, Result};
use crate::seed;

/// Fold seeds of the three cross-validation runs.
pub const DEFAULT_RUN_SEEDS: [u64; 3] = [2803636207, 165043843, 2923262358];
pub const DEFAULT_FOLDS: usize = 4;

/// Label with strictly more votes; a tie is toxic.
pub fn majority_label(labels: &[BinaryLabel]) -> Result<BinaryLabel> {
    if labels.is_empty() {
        return Err(Error::input("majority of an empty label set"));
    }
    let toxic = labels.iter().filter(|l| l.is_toxic()).count();
    Ok(if 2 * toxic >= labels.len() {
        BinaryLabel::Toxic
    } else {
        BinaryLabel::NonToxic
    })
}

/// Majority label of every comment.
pub fn comment_majorities(corpus: &Corpus) -> BTreeMap<&str, BinaryLabel> {
    corpus
        .annotations_by_comment()
        .into_iter()
        .map(|(c, recs)| {
            let labels: Vec<BinaryLabel> = recs.iter().map(|r| r.label()).collect();
            (c, majority_label(&labels).expect("comments have annotations"))
        })
        .collect()
}

/// Partitions the comments into `k` blocks, stratified by majority label.
///
/// Each stratum is shuffled with `seed` and dealt round-robin; the dealing
/// position carries over from the toxic stratum to the non-toxic one so
/// block sizes differ by at most one.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {k}")));
    }
    let n = corpus.comments().len();
    if k > n {
        return Err(Error::config(format!("{k} folds exceed {n} comments")));
    }
    let majorities = comment_majorities(corpus);
    let mut rng = seed::rng(seed);
    let mut blocks: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut next = 0;
    for label in [BinaryLabel::Toxic, BinaryLabel::NonToxic] {
        let mut stratum: Vec<&str> = majorities
            .iter()
            .filter(|(_, &l)| l == label)
            .map(|(&c, _)| c)
            .collect();
        stratum.shuffle(&mut rng);
        for c in stratum {
            blocks[next].push(c.to_string());
            next = (next + 1) % k;
        }
    }
    for b in &mut blocks {
        b.sort();
    }
    Ok(blocks)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldRun {
    pub seed: u64,
    pub blocks: Vec<Vec<String>>,
}

impl FoldRun {
    /// Training and test annotations for fold `fold`: test annotations are
    /// those on the fold's comments, training annotations all others.
    pub fn split<'c>(&self, corpus: &'c Corpus, fold: usize) -> (Vec<&'c AnnotationRecord>, Vec<&'c AnnotationRecord>) {
        let test: BTreeSet<&str> = self.blocks[fold].iter().map(String::as_str).collect();
        corpus
            .annotations()
            .iter()
            .partition(|r| !test.contains(r.comment_id.as_str()))
    }
}

/// Repeated k-fold plan: one partition per run seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub runs: Vec<FoldRun>,
}

impl FoldPlan {
    pub fn new(corpus: &Corpus, k: usize, run_seeds: &[u64]) -> Result<Self> {
        if run_seeds.is_empty() {
            return Err(Error::config("fold plan needs at least one run seed"));
        }
        let runs = run_seeds
            .iter()
            .map(|&seed| {
                Ok(FoldRun {
                    seed,
                    blocks: make_folds(corpus, k, seed)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { k, runs })
    }

    /// Writes `run_seed,fold_index,comment_id` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["run_seed", "fold_index", "comment_id"])?;
        for run in &self.runs {
            for (i, block) in run.blocks.iter().enumerate() {
                for c in block {
                    w.write_record([run.seed.to_string(), i.to_string(), c.clone()])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut runs: Vec<FoldRun> = Vec::new();
        let mut k = 0;
        for row in rdr.records() {
            let row = row?;
            let seed: u64 = row[0]
                .parse()
                .map_err(|_| Error::data(format!("bad run seed `{}`", &row[0])))?;
            let fold: usize = row[1]
                .parse()
                .map_err(|_| Error::data(format!("bad fold index `{}`", &row[1])))?;
            if runs.last().map(|r| r.seed) != Some(seed) {
                runs.push(FoldRun {
                    seed,
                    blocks: Vec::new(),
                });
            }
            let run = runs.last_mut().expect("pushed above");
            if run.blocks.len() <= fold {
                run.blocks.resize(fold + 1, Vec::new());
            }
            run.blocks[fold].push(row[2].to_string());
            k = k.max(fold + 1);
        }
        for run in &mut runs {
            run.blocks.resize(k, Vec::new());
        }
        Ok(Self { k, runs })
    }
}

/// One prediction for one test annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub comment_id: String,
    pub annotator_id: String,
    pub gold: BinaryLabel,
    pub predicted: BinaryLabel,
}

/// 2x2 confusion counts, indexed `[gold][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub counts: [[usize; 2]; 2],
}

impl Confusion {
    pub fn add(&mut self, gold: BinaryLabel, predicted: BinaryLabel) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// F1 of one class; a class with no true, predicted or matched instance scores 0.
    pub fn f1(&self, class: BinaryLabel) -> f64 {
        let c = class.index();
        let o = 1 - c;
        let tp = self.counts[c][c] as f64;
        let fp = self.counts[o][c] as f64;
        let fneg = self.counts[c][o] as f64;
        let denom = 2.0 * tp + fp + fneg;
        if denom == 0.0 || tp == 0.0 {
            0.0
        } else {
            2.0 * tp / denom
        }
    }

    pub fn macro_f1(&self) -> f64 {
        0.5 * (self.f1(BinaryLabel::NonToxic) + self.f1(BinaryLabel::Toxic))
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            (self.counts[0][0] + self.counts[1][1]) as f64 / n as f64
        }
    }
}

/// Macro-F1 over paired gold/predicted label slices.
pub fn macro_f1_labels(gold: &[BinaryLabel], predicted: &[BinaryLabel]) -> f64 {
    let mut c = Confusion::default();
    for (&g, &p) in gold.iter().zip(predicted) {
        c.add(g, p);
    }
    c.macro_f1()
}

pub fn macro_f1(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::input("macro-F1 of an empty prediction set"));
    }
    let mut c = Confusion::default();
    for r in records {
        c.add(r.gold, r.predicted);
    }
    Ok(c.macro_f1())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupScore {
    pub macro_f1: f64,
    pub support: usize,
    pub skipped_annotations: usize,
}

/// Scores keyed by group index; only groups with test predictions appear.
pub type GroupScores = BTreeMap<usize, GroupScore>;

/// Macro-F1 per group of `scheme`. `skipped` lists the annotator of every
/// test annotation left out because its annotator had no training data.
pub fn evaluate_by_group(
    records: &[PredictionRecord],
    scheme: &GroupScheme,
    skipped: &[&str],
) -> Result<GroupScores> {
    let group = |a: &str| {
        scheme
            .group_of(a)
            .ok_or_else(|| Error::input(format!("annotator `{a}` not in the group scheme")))
    };
    let mut confusions: BTreeMap<usize, Confusion> = BTreeMap::new();
    for r in records {
        confusions.entry(group(&r.annotator_id)?).or_default().add(r.gold, r.predicted);
    }
    let mut skipped_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for a in skipped {
        *skipped_counts.entry(group(a)?).or_default() += 1;
    }
    Ok(confusions
        .into_iter()
        .map(|(g, c)| {
            (
                g,
                GroupScore {
                    macro_f1: c.macro_f1(),
                    support: c.total(),
                    skipped_annotations: skipped_counts.get(&g).copied().unwrap_or(0),
                },
            )
        })
        .collect())
}

/// Predicts toxic for every input.
#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityToxic;

impl MajorityToxic {
    pub fn predict(&self) -> BinaryLabel {
        BinaryLabel::Toxic
    }
}

/// Test annotations of one fold, split by whether their annotator has any
/// training annotation in that fold.
pub fn evaluable_test_annotations<'c>(
    train: &[&'c AnnotationRecord],
    test: &[&'c AnnotationRecord],
) -> (Vec<&'c AnnotationRecord>, Vec<&'c AnnotationRecord>) {
    let trained: BTreeSet<&str> = train.iter().map(|r| r.annotator_id.as_str()).collect();
    test.iter()
        .copied()
        .partition(|r| trained.contains(r.annotator_id.as_str()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSupport {
    pub run_seed: u64,
    pub fold: usize,
    pub support: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportSummary {
    pub folds: Vec<FoldSupport>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub min: usize,
    pub max: usize,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Effective test-set size of every group in every run and fold.
pub fn support_stats(plan: &FoldPlan, scheme: &GroupScheme, corpus: &Corpus) -> Result<BTreeMap<usize, SupportSummary>> {
    if plan.k < 2 {
        return Err(Error::config(format!("support statistics need k >= 2, got {}", plan.k)));
    }
    let mut per_group: BTreeMap<usize, Vec<FoldSupport>> =
        (0..scheme.n_groups()).map(|g| (g, Vec::new())).collect();
    for run in &plan.runs {
        for fold in 0..plan.k {
            let (train, test) = run.split(corpus, fold);
            let (kept, skipped) = evaluable_test_annotations(&train, &test);
            let mut counts = vec![(0usize, 0usize); scheme.n_groups()];
            for r in &kept {
                let g = scheme.group_of(&r.annotator_id).ok_or_else(|| {
                    Error::input(format!("annotator `{}` not in the group scheme", r.annotator_id))
                })?;
                counts[g].0 += 1;
            }
            for r in &skipped {
                if let Some(g) = scheme.group_of(&r.annotator_id) {
                    counts[g].1 += 1;
                }
            }
            for (g, (support, skipped)) in counts.into_iter().enumerate() {
                per_group.get_mut(&g).expect("all groups present").push(FoldSupport {
                    run_seed: run.seed,
                    fold,
                    support,
                    skipped,
                });
            }
        }
    }
    Ok(per_group
        .into_iter()
        .map(|(g, folds)| {
            let xs: Vec<f64> = folds.iter().map(|f| f.support as f64).collect();
            let (mean, std) = mean_std(&xs);
            let min = folds.iter().map(|f| f.support).min().unwrap_or(0);
            let max = folds.iter().map(|f| f.support).max().unwrap_or(0);
            (
                g,
                SupportSummary {
                    folds,
                    mean,
                    std,
                    min,
                    max,
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests;
