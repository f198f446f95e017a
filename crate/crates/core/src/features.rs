//! Frozen text featurizers.
//!
//! Comments are mapped to fixed dense vectors once; only the group layers
//! and annotator heads are trained on top of them.

use std::collections::BTreeMap;
use std::path::Path;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturizerKind {
    HashedBow,
    Precomputed,
}

impl std::str::FromStr for FeaturizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hashed_bow" => Ok(FeaturizerKind::HashedBow),
            "precomputed" => Ok(FeaturizerKind::Precomputed),
            _ => Err(Error::config(format!("unknown featurizer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturizerSpec {
    pub kind: FeaturizerKind,
    pub dim: usize,
    pub seed: u64,
    pub max_tokens: usize,
}

impl FeaturizerSpec {
    pub fn hashed(dim: usize, seed: u64) -> Self {
        Self {
            kind: FeaturizerKind::HashedBow,
            dim,
            seed,
            max_tokens: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::config(format!("feature dimension {} < 2", self.dim)));
        }
        Ok(())
    }
}

/// Lowercased alphanumeric runs, capped at `max_tokens`.
pub fn tokenize(text: &str, max_tokens: usize) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .take(max_tokens)
        .map(str::to_string)
        .collect()
}

/// Signed feature hashing of the token bag, L2-normalized.
pub fn hashed_bow(text: &str, spec: &FeaturizerSpec) -> Vec<f64> {
    let mut v = vec![0.0; spec.dim];
    for token in tokenize(text, spec.max_tokens) {
        let h = fnv1a64(token.as_bytes()) ^ spec.seed;
        let bucket = (h % spec.dim as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Reads `comment_id,v1,...,vD` rows. A leading row whose first field is
/// `comment_id` is treated as a header.
pub fn load_precomputed(path: &Path, dim: usize) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        if i == 0 && row.get(0) == Some("comment_id") {
            continue;
        }
        if row.len() != dim + 1 {
            return Err(Error::data(format!(
                "{} line {line}: expected {dim} values, found {}",
                path.display(),
                row.len().saturating_sub(1)
            )));
        }
        let values = row
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::data(format!("{} line {line}: bad number `{s}`", path.display()))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let id = row[0].to_string();
        if out.insert(id.clone(), values).is_some() {
            return Err(Error::data(format!(
                "{} line {line}: duplicate comment `{id}`",
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Feature vectors for every comment of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dim: usize, vectors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if let Some((id, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::data(format!(
                "feature vector of `{id}` has dimension {} instead of {dim}",
                v.len()
            )));
        }
        Ok(Self { dim, vectors })
    }

    /// Featurizes every comment of `corpus`. Precomputed features are read
    /// from `precomputed` and must cover all comments.
    pub fn build(corpus: &Corpus, spec: &FeaturizerSpec, precomputed: Option<&Path>) -> Result<Self> {
        spec.validate()?;
        let vectors = match spec.kind {
            FeaturizerKind::HashedBow => corpus
                .comments()
                .iter()
                .map(|(id, text)| (id.clone(), hashed_bow(text, spec)))
                .collect(),
            FeaturizerKind::Precomputed => {
                let path = precomputed
                    .ok_or_else(|| Error::config("precomputed featurizer needs a file path"))?;
                let all = load_precomputed(path, spec.dim)?;
                let mut out = BTreeMap::new();
                for id in corpus.comments().keys() {
                    let v = all.get(id).ok_or_else(|| {
                        Error::data(format!("no precomputed features for comment `{id}`"))
                    })?;
                    out.insert(id.clone(), v.clone());
                }
                out
            }
        };
        Self::new(spec.dim, vectors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, comment_id: &str) -> Option<&[f64]> {
        self.vectors.get(comment_id).map(Vec::as_slice)
    }
}
