//! Annotation corpora: comments, annotator profiles and disaggregated ratings.

mod io;
mod scheme;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

pub use io::{load_corpus, write_corpus, CorpusPaths, IngestOptions, UnderageFilter};
pub use scheme::{build_group_scheme, shuffle_group_scheme, GroupScheme, ShuffleMode};

/// Residual category for unknown or ambiguous attribute values.
pub const PREFER_NOT_TO_SAY: &str = "Prefer not to say";

/// A rating on the five-point toxicity scale (0 to 4).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rating(u8);

impl Rating {
    pub const MAX: u8 = 4;

    pub fn new(value: i64) -> Result<Self> {
        if (0..=Self::MAX as i64).contains(&value) {
            Ok(Rating(value as u8))
        } else {
            Err(Error::input(format!("rating {value} outside 0..=4")))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn label(self) -> BinaryLabel {
        if self.0 >= 2 {
            BinaryLabel::Toxic
        } else {
            BinaryLabel::NonToxic
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryLabel {
    NonToxic = 0,
    Toxic = 1,
}

impl BinaryLabel {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            BinaryLabel::NonToxic
        } else {
            BinaryLabel::Toxic
        }
    }

    pub fn is_toxic(self) -> bool {
        self == BinaryLabel::Toxic
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::NonToxic => "non_toxic",
            BinaryLabel::Toxic => "toxic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "toxic" | "1" => Ok(BinaryLabel::Toxic),
            "non_toxic" | "0" => Ok(BinaryLabel::NonToxic),
            _ => Err(Error::input(format!("unknown label `{s}`"))),
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a raw rating to a binary label: 2, 3 and 4 are toxic.
pub fn binarize_rating(value: i64) -> Result<BinaryLabel> {
    Rating::new(value).map(Rating::label)
}

/// Resolves several reported values of one attribute to a single category.
///
/// The unique most frequent value wins; a tie for the maximum frequency
/// resolves to [`PREFER_NOT_TO_SAY`].
pub fn disambiguate_attribute<S: AsRef<str>>(values: &[S]) -> Result<String> {
    if values.is_empty() {
        return Err(Error::input("no attribute values to disambiguate"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v.as_ref()).or_default() += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    let mut modes = counts.iter().filter(|(_, &c)| c == max);
    match (modes.next(), modes.next()) {
        (Some((value, _)), None) => Ok((*value).to_string()),
        _ => Ok(PREFER_NOT_TO_SAY.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatorProfile {
    pub id: String,
    pub attributes: BTreeMap<String, String>,
}

impl AnnotatorProfile {
    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub comment_id: String,
    pub annotator_id: String,
    pub rating: Rating,
    /// Survey answers attached to this particular annotation, if any.
    pub reported_attributes: BTreeMap<String, String>,
}

impl AnnotationRecord {
    pub fn new(comment_id: impl Into<String>, annotator_id: impl Into<String>, rating: Rating) -> Self {
        Self {
            comment_id: comment_id.into(),
            annotator_id: annotator_id.into(),
            rating,
            reported_attributes: BTreeMap::new(),
        }
    }

    pub fn label(&self) -> BinaryLabel {
        self.rating.label()
    }
}

/// A validated, immutable annotation corpus.
///
/// Annotations are kept sorted by `(comment_id, annotator_id)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    attributes: Vec<String>,
    comments: BTreeMap<String, String>,
    annotators: BTreeMap<String, AnnotatorProfile>,
    annotations: Vec<AnnotationRecord>,
}

impl Corpus {
    /// Builds a corpus, checking referential integrity, pair uniqueness,
    /// that every comment is annotated and that every profile covers the
    /// attribute schema.
    pub fn new(
        attributes: Vec<String>,
        comments: BTreeMap<String, String>,
        annotators: impl IntoIterator<Item = AnnotatorProfile>,
        mut annotations: Vec<AnnotationRecord>,
    ) -> Result<Self> {
        let mut seen_attr = BTreeSet::new();
        for a in &attributes {
            if !seen_attr.insert(a.as_str()) {
                return Err(Error::input(format!("attribute `{a}` listed twice")));
            }
        }
        let mut profiles = BTreeMap::new();
        for p in annotators {
            for a in &attributes {
                if !p.attributes.contains_key(a) {
                    return Err(Error::input(format!(
                        "annotator `{}` has no value for attribute `{a}`",
                        p.id
                    )));
                }
            }
            if let Some(extra) = p.attributes.keys().find(|k| !seen_attr.contains(k.as_str())) {
                return Err(Error::input(format!(
                    "annotator `{}` has attribute `{extra}` outside the schema",
                    p.id
                )));
            }
            let id = p.id.clone();
            if profiles.insert(id.clone(), p).is_some() {
                return Err(Error::data(format!("duplicate annotator `{id}`")));
            }
        }

        annotations.sort_by(|a, b| {
            (a.comment_id.as_str(), a.annotator_id.as_str())
                .cmp(&(b.comment_id.as_str(), b.annotator_id.as_str()))
        });
        for pair in annotations.windows(2) {
            if pair[0].comment_id == pair[1].comment_id
                && pair[0].annotator_id == pair[1].annotator_id
            {
                return Err(Error::data(format!(
                    "annotator `{}` rated comment `{}` twice",
                    pair[0].annotator_id, pair[0].comment_id
                )));
            }
        }
        let mut annotated = BTreeSet::new();
        for rec in &annotations {
            if !comments.contains_key(&rec.comment_id) {
                return Err(Error::data(format!(
                    "annotation references unknown comment `{}`",
                    rec.comment_id
                )));
            }
            if !profiles.contains_key(&rec.annotator_id) {
                return Err(Error::data(format!(
                    "annotation references unknown annotator `{}`",
                    rec.annotator_id
                )));
            }
            annotated.insert(rec.comment_id.as_str());
        }
        if let Some(c) = comments.keys().find(|c| !annotated.contains(c.as_str())) {
            return Err(Error::data(format!("comment `{c}` has no annotations")));
        }

        Ok(Self {
            attributes,
            comments,
            annotators: profiles,
            annotations,
        })
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn comments(&self) -> &BTreeMap<String, String> {
        &self.comments
    }

    pub fn annotators(&self) -> &BTreeMap<String, AnnotatorProfile> {
        &self.annotators
    }

    pub fn annotations(&self) -> &[AnnotationRecord] {
        &self.annotations
    }

    pub fn comment_text(&self, id: &str) -> Option<&str> {
        self.comments.get(id).map(String::as_str)
    }

    /// Annotations grouped per comment, in comment-id order.
    pub fn annotations_by_comment(&self) -> BTreeMap<&str, Vec<&AnnotationRecord>> {
        let mut out: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for rec in &self.annotations {
            out.entry(rec.comment_id.as_str()).or_default().push(rec);
        }
        out
    }

    pub fn annotations_by_annotator(&self) -> BTreeMap<&str, Vec<&AnnotationRecord>> {
        let mut out: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        for rec in &self.annotations {
            out.entry(rec.annotator_id.as_str()).or_default().push(rec);
        }
        out
    }

    /// Sub-corpus made of the given annotations; comments and annotators are
    /// restricted to those referenced.
    pub fn restrict_to(&self, annotations: Vec<AnnotationRecord>) -> Result<Corpus> {
        let comment_ids: BTreeSet<&str> = annotations.iter().map(|r| r.comment_id.as_str()).collect();
        let annotator_ids: BTreeSet<&str> =
            annotations.iter().map(|r| r.annotator_id.as_str()).collect();
        let comments = self
            .comments
            .iter()
            .filter(|(id, _)| comment_ids.contains(id.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let annotators: Vec<AnnotatorProfile> = self
            .annotators
            .values()
            .filter(|p| annotator_ids.contains(p.id.as_str()))
            .cloned()
            .collect();
        Corpus::new(self.attributes.clone(), comments, annotators, annotations)
    }
}

/// Draws comments in a seeded uniform order until the accumulated annotator
/// set holds more than `target` annotators, then keeps every annotation made
/// by those annotators.
pub fn sample_to_annotator_target(corpus: &Corpus, target: usize, seed: u64) -> Result<Corpus> {
    if target == 0 {
        return Err(Error::config("annotator target must be positive"));
    }
    if corpus.annotators_with_annotations() <= target {
        return Err(Error::config(format!(
            "corpus has {} annotators; cannot exceed target {target}",
            corpus.annotators_with_annotations()
        )));
    }
    let by_comment = corpus.annotations_by_comment();
    let mut order: Vec<&str> = by_comment.keys().copied().collect();
    order.shuffle(&mut seed::rng(seed));

    let mut chosen: BTreeSet<&str> = BTreeSet::new();
    for comment in order {
        chosen.extend(by_comment[comment].iter().map(|r| r.annotator_id.as_str()));
        if chosen.len() > target {
            break;
        }
    }
    let annotations = corpus
        .annotations
        .iter()
        .filter(|r| chosen.contains(r.annotator_id.as_str()))
        .cloned()
        .collect();
    corpus.restrict_to(annotations)
}

impl Corpus {
    fn annotators_with_annotations(&self) -> usize {
        self.annotations
            .iter()
            .map(|r| r.annotator_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub annotations: usize,
    pub annotators: usize,
    pub comments: usize,
    pub toxic_annotations: usize,
    pub toxic_fraction: f64,
    pub per_annotator_min: usize,
    pub per_annotator_mean: f64,
    pub per_annotator_max: usize,
    /// annotations-per-comment → number of comments
    pub per_comment_histogram: BTreeMap<usize, usize>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let n = corpus.annotations.len();
    let toxic = corpus.annotations.iter().filter(|r| r.label().is_toxic()).count();
    let by_annotator = corpus.annotations_by_annotator();
    let per_annotator: Vec<usize> = corpus
        .annotators
        .keys()
        .map(|id| by_annotator.get(id.as_str()).map_or(0, Vec::len))
        .collect();
    let mut per_comment_histogram = BTreeMap::new();
    for recs in corpus.annotations_by_comment().values() {
        *per_comment_histogram.entry(recs.len()).or_insert(0) += 1;
    }
    CorpusStats {
        annotations: n,
        annotators: corpus.annotators.len(),
        comments: corpus.comments.len(),
        toxic_annotations: toxic,
        toxic_fraction: if n == 0 { 0.0 } else { toxic as f64 / n as f64 },
        per_annotator_min: per_annotator.iter().copied().min().unwrap_or(0),
        per_annotator_mean: if per_annotator.is_empty() {
            0.0
        } else {
            per_annotator.iter().sum::<usize>() as f64 / per_annotator.len() as f64
        },
        per_annotator_max: per_annotator.iter().copied().max().unwrap_or(0),
        per_comment_histogram,
    }
}
