//! Result files written by an experiment and read back by the report.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FOLDS_FILE: &str = "folds.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const SIGNIFICANCE_FILE: &str = "significance.csv";
pub const SIGNIFICANCE_SUMMARY_FILE: &str = "significance_summary.csv";
pub const SUPPORT_FILE: &str = "support.csv";
pub const SUPPORT_SUMMARY_FILE: &str = "support_summary.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "MANIFEST";

/// Macro-F1 of one model on one group in one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub attribute: String,
    pub group: String,
    pub model: String,
    pub run_seed: u64,
    pub fold_index: usize,
    pub macro_f1: f64,
    pub support: usize,
    pub skipped: usize,
}

/// Mean and sample standard deviation over all runs and folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub attribute: String,
    pub group: String,
    pub model: String,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub n_folds: usize,
    pub mean_support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueRow {
    pub attribute: String,
    pub group: String,
    pub comparison: String,
    pub run_seed: u64,
    pub fold_index: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceSummaryRow {
    pub attribute: String,
    pub group: String,
    pub comparison: String,
    pub significant_count: usize,
    pub bonferroni_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportRow {
    pub attribute: String,
    pub group: String,
    pub run_seed: u64,
    pub fold_index: usize,
    pub support: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSummaryRow {
    pub attribute: String,
    pub group: String,
    pub mean: f64,
    pub std: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub run_seed: u64,
    pub fold_index: usize,
    pub comment_id: String,
    pub annotator_id: String,
    pub gold: String,
    pub pred: String,
    pub model_tag: String,
}

pub fn predictions_file(attribute: &str) -> String {
    format!("predictions_{}.csv", sanitize(attribute))
}

/// File-name-safe form of a free-text name.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Runs `write` against a temporary sibling of `path`, then renames it into place.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let tmp = tmp_path(path);
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, |tmp| {
        let mut w = csv::Writer::from_path(tmp)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(tmp, e))
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |tmp| std::fs::write(tmp, text).map_err(|e| Error::io(tmp, e)))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv(e).context(path.display().to_string()))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Csv(e).context(path.display().to_string()))
}
