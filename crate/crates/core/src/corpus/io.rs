//! Canonical CSV schema for corpora.
//!
//! * `annotations.csv`: `comment_id,annotator_id,rating[,<attribute>...]`
//! * `comments.csv`: `comment_id,text`
//! * `annotators.csv`: `annotator_id,<attribute>...` (optional on input)

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::{disambiguate_attribute, AnnotationRecord, AnnotatorProfile, Corpus, Rating, PREFER_NOT_TO_SAY};
use crate::error::{Error, Result};

pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const COMMENTS_FILE: &str = "comments.csv";
pub const ANNOTATORS_FILE: &str = "annotators.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub annotations: PathBuf,
    pub comments: PathBuf,
    pub annotators: Option<PathBuf>,
}

impl CorpusPaths {
    /// The three canonical files inside `dir`; the annotators file is used
    /// only if it exists.
    pub fn in_dir(dir: &Path) -> Self {
        let annotators = dir.join(ANNOTATORS_FILE);
        Self {
            annotations: dir.join(ANNOTATIONS_FILE),
            comments: dir.join(COMMENTS_FILE),
            annotators: annotators.exists().then_some(annotators),
        }
    }
}

/// Removes annotators whose resolved `attribute` is one of `categories`
/// before the corpus is assembled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnderageFilter {
    pub attribute: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestOptions {
    pub underage: Option<UnderageFilter>,
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Csv(e).context(path.display().to_string()))
}

fn check_header(path: &Path, header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.iter().take(expected.len()).collect();
    if got != expected {
        return Err(Error::data(format!(
            "{}: header must start with `{}`, found `{}`",
            path.display(),
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn read_annotations(path: &Path) -> Result<(Vec<String>, Vec<AnnotationRecord>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    check_header(path, &header, &["comment_id", "annotator_id", "rating"])?;
    let attr_cols: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let at = || format!("{} row {}", path.display(), i + 2);
        let raw = row.get(2).unwrap_or("").trim();
        let value: i64 = raw
            .parse()
            .map_err(|_| Error::input(format!("unparsable rating `{raw}`")).context(at()))?;
        let rating = Rating::new(value).map_err(|e| e.context(at()))?;
        let mut rec = AnnotationRecord::new(&row[0], &row[1], rating);
        for (j, name) in attr_cols.iter().enumerate() {
            let v = row.get(3 + j).unwrap_or("");
            if !v.is_empty() {
                rec.reported_attributes.insert(name.clone(), v.to_string());
            }
        }
        out.push(rec);
    }
    Ok((attr_cols, out))
}

fn read_comments(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    check_header(path, &header, &["comment_id", "text"])?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let id = row[0].to_string();
        if out.insert(id.clone(), row.get(1).unwrap_or("").to_string()).is_some() {
            return Err(Error::data(format!("{}: duplicate comment `{id}`", path.display())));
        }
    }
    Ok(out)
}

fn read_annotators(path: &Path) -> Result<(Vec<String>, Vec<AnnotatorProfile>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    check_header(path, &header, &["annotator_id"])?;
    let attrs: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let attributes = attrs
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let v = row.get(1 + j).unwrap_or("");
                let v = if v.is_empty() { PREFER_NOT_TO_SAY } else { v };
                (a.clone(), v.to_string())
            })
            .collect();
        out.push(AnnotatorProfile {
            id: row[0].to_string(),
            attributes,
        });
    }
    Ok((attrs, out))
}

/// Reads a corpus from the canonical files.
///
/// Profiles come from the annotators file when given; attributes only
/// present as per-annotation columns are resolved with
/// [`disambiguate_attribute`]. Comments without any annotation are dropped.
pub fn load_corpus(paths: &CorpusPaths, opts: &IngestOptions) -> Result<Corpus> {
    let (annotation_attrs, annotations) = read_annotations(&paths.annotations)?;
    let comments = read_comments(&paths.comments)?;

    let (mut schema, mut profiles) = match &paths.annotators {
        Some(p) => {
            let (attrs, list) = read_annotators(p)?;
            let mut map = BTreeMap::new();
            for prof in list {
                let id = prof.id.clone();
                if map.insert(id.clone(), prof).is_some() {
                    return Err(Error::data(format!("{}: duplicate annotator `{id}`", p.display())));
                }
            }
            (attrs, map)
        }
        None => (Vec::new(), BTreeMap::new()),
    };
    let from_file = paths.annotators.is_some();
    let derived: Vec<String> = annotation_attrs
        .iter()
        .filter(|a| !schema.contains(a))
        .cloned()
        .collect();

    let mut reported: BTreeMap<&str, BTreeMap<&str, Vec<&str>>> = BTreeMap::new();
    for rec in &annotations {
        let per = reported.entry(rec.annotator_id.as_str()).or_default();
        for (k, v) in &rec.reported_attributes {
            per.entry(k.as_str()).or_default().push(v.as_str());
        }
    }
    for (&annotator, per) in &reported {
        if from_file && !profiles.contains_key(annotator) {
            return Err(Error::data(format!(
                "annotator `{annotator}` missing from the annotators file"
            )));
        }
        let profile = profiles
            .entry(annotator.to_string())
            .or_insert_with(|| AnnotatorProfile {
                id: annotator.to_string(),
                attributes: BTreeMap::new(),
            });
        for attr in &derived {
            let value = match per.get(attr.as_str()) {
                Some(values) => disambiguate_attribute(values)?,
                None => PREFER_NOT_TO_SAY.to_string(),
            };
            profile.attributes.insert(attr.clone(), value);
        }
    }
    for profile in profiles.values_mut() {
        for attr in &derived {
            profile
                .attributes
                .entry(attr.clone())
                .or_insert_with(|| PREFER_NOT_TO_SAY.to_string());
        }
    }
    schema.extend(derived);

    let (profiles, annotations) = match &opts.underage {
        Some(filter) => {
            let removed: BTreeSet<String> = profiles
                .values()
                .filter(|p| {
                    p.attribute(&filter.attribute)
                        .is_some_and(|v| filter.categories.iter().any(|c| c == v))
                })
                .map(|p| p.id.clone())
                .collect();
            let kept_profiles = profiles
                .into_values()
                .filter(|p| !removed.contains(&p.id))
                .collect::<Vec<_>>();
            let kept = annotations
                .into_iter()
                .filter(|r| !removed.contains(&r.annotator_id))
                .collect::<Vec<_>>();
            (kept_profiles, kept)
        }
        None => (profiles.into_values().collect(), annotations),
    };

    let annotated: BTreeSet<&str> = annotations.iter().map(|r| r.comment_id.as_str()).collect();
    let comments = comments
        .iter()
        .filter(|(id, _)| annotated.contains(id.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Corpus::new(schema, comments, profiles, annotations)
}

/// Writes the canonical form of `corpus` into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let reported_cols: Vec<&String> = corpus
        .attributes()
        .iter()
        .filter(|a| {
            corpus
                .annotations()
                .iter()
                .any(|r| r.reported_attributes.contains_key(*a))
        })
        .collect();
    let path = dir.join(ANNOTATIONS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["comment_id", "annotator_id", "rating"];
    header.extend(reported_cols.iter().map(|s| s.as_str()));
    w.write_record(&header)?;
    for rec in corpus.annotations() {
        let rating = rec.rating.value().to_string();
        let mut row = vec![rec.comment_id.as_str(), rec.annotator_id.as_str(), rating.as_str()];
        row.extend(
            reported_cols
                .iter()
                .map(|a| rec.reported_attributes.get(*a).map_or("", String::as_str)),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(COMMENTS_FILE);
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .from_path(&path)?;
    w.write_record(["comment_id", "text"])?;
    for (id, text) in corpus.comments() {
        w.write_record([id, text])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(ANNOTATORS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["annotator_id"];
    header.extend(corpus.attributes().iter().map(String::as_str));
    w.write_record(&header)?;
    for p in corpus.annotators().values() {
        let mut row = vec![p.id.as_str()];
        row.extend(corpus.attributes().iter().map(|a| p.attributes[a].as_str()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}
