//! Synthetic annotator populations.
//!
//! Each comment has a latent toxicity `t ~ N(mu_t, 1)`; each annotator has a
//! threshold `theta = beta0 + sum of category offsets + eps`, with
//! `eps ~ N(0, sigma_individual^2)`. An annotation is toxic with probability
//! `sigmoid((t - theta) / tau)`. Group effects (the offsets) and individual
//! effects (`sigma_individual`) are therefore tuned independently.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{self, AnnotationRecord, AnnotatorProfile, Corpus, Rating};
use crate::error::{Error, Result};
use crate::kvconfig::KvConfig;
use crate::seed;

pub const LATENTS_FILE: &str = "latents.csv";

/// Highest comment-text bucket; buckets are 0.5 wide starting at t = -4.
const TOP_BUCKET: usize = 15;
const FILLER_TOKENS: usize = 3;
const FILLER_VOCAB: u32 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CategorySpec {
    pub name: String,
    pub proportion: f64,
    /// Threshold offset shared by every annotator in the category.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub categories: Vec<CategorySpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub n_annotators: usize,
    pub n_comments: usize,
    pub annotations_per_comment: usize,
    pub attributes: Vec<AttributeSpec>,
    pub sigma_individual: f64,
    pub tau: f64,
    pub mu_t: f64,
    pub beta0: f64,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_annotators == 0 || self.n_comments == 0 || self.annotations_per_comment == 0 {
            return Err(Error::config(
                "n_annotators, n_comments and annotations_per_comment must be positive",
            ));
        }
        if self.annotations_per_comment > self.n_annotators {
            return Err(Error::config(format!(
                "annotations_per_comment {} exceeds n_annotators {}",
                self.annotations_per_comment, self.n_annotators
            )));
        }
        if !(self.sigma_individual >= 0.0 && self.sigma_individual.is_finite()) {
            return Err(Error::config("sigma_individual must be finite and >= 0"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau must be finite and > 0"));
        }
        if !self.mu_t.is_finite() || !self.beta0.is_finite() {
            return Err(Error::config("mu_t and beta0 must be finite"));
        }
        for attr in &self.attributes {
            if attr.categories.is_empty() {
                return Err(Error::config(format!("attribute `{}` has no categories", attr.name)));
            }
            let total: f64 = attr.categories.iter().map(|c| c.proportion).sum();
            if (total - 1.0).abs() > 1e-9 || attr.categories.iter().any(|c| c.proportion < 0.0) {
                return Err(Error::config(format!(
                    "proportions of `{}` must be non-negative and sum to 1 (got {total})",
                    attr.name
                )));
            }
            if attr.categories.iter().any(|c| !c.offset.is_finite()) {
                return Err(Error::config(format!("offsets of `{}` must be finite", attr.name)));
            }
        }
        Ok(())
    }

    /// Reads the spec from keys `<prefix>n_annotators`, `<prefix>seed`, ...
    /// Attributes are given as
    /// `<prefix>attributes.<name> = <category>:<proportion>:<offset>, ...`.
    pub fn from_kv(cfg: &KvConfig, prefix: &str) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        let mut attributes = Vec::new();
        let attr_prefix = key("attributes");
        for name in cfg.keys_with_prefix(&attr_prefix) {
            let raw = cfg
                .get_str(&format!("{attr_prefix}.{name}"))
                .unwrap_or_default()
                .to_string();
            let categories = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|item| parse_category(&name, item))
                .collect::<Result<Vec<_>>>()?;
            attributes.push(AttributeSpec { name, categories });
        }
        let spec = Self {
            n_annotators: cfg.require(&key("n_annotators"))?,
            n_comments: cfg.require(&key("n_comments"))?,
            annotations_per_comment: cfg.get_or(&key("annotations_per_comment"), 5)?,
            attributes,
            sigma_individual: cfg.get_or(&key("sigma_individual"), 0.0)?,
            tau: cfg.get_or(&key("tau"), 1.0)?,
            mu_t: cfg.get_or(&key("mu_t"), 0.0)?,
            beta0: cfg.get_or(&key("beta0"), 0.0)?,
            seed: cfg.require(&key("seed"))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_category(attr: &str, item: &str) -> Result<CategorySpec> {
    let parts: Vec<&str> = item.split(':').map(str::trim).collect();
    let bad = || Error::config(format!("attribute `{attr}`: expected `name:proportion:offset`, got `{item}`"));
    if parts.len() != 3 || parts[0].is_empty() {
        return Err(bad());
    }
    Ok(CategorySpec {
        name: parts[0].to_string(),
        proportion: parts[1].parse().map_err(|_| bad())?,
        offset: parts[2].parse().map_err(|_| bad())?,
    })
}

/// Probability that an annotator with threshold `theta` labels a comment
/// with latent `t` as toxic.
pub fn annotation_probability(t: f64, theta: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::config(format!("tau must be > 0, got {tau}")));
    }
    Ok(sigmoid((t - theta) / tau))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Latent values behind a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub comment_t: BTreeMap<String, f64>,
    pub annotator_theta: BTreeMap<String, f64>,
}

impl Latents {
    /// Writes `variable,id,value` rows: `t` for comments, `theta` for annotators.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["variable", "id", "value"])?;
        for (id, t) in &self.comment_t {
            w.write_record(["t", id, &t.to_string()])?;
        }
        for (id, theta) in &self.annotator_theta {
            w.write_record(["theta", id, &theta.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut out = Latents {
            comment_t: BTreeMap::new(),
            annotator_theta: BTreeMap::new(),
        };
        for row in rdr.records() {
            let row = row?;
            let value: f64 = row[2]
                .parse()
                .map_err(|_| Error::data(format!("bad latent value `{}`", &row[2])))?;
            let target = match &row[0] {
                "t" => &mut out.comment_t,
                "theta" => &mut out.annotator_theta,
                other => return Err(Error::data(format!("unknown latent variable `{other}`"))),
            };
            target.insert(row[1].to_string(), value);
        }
        Ok(out)
    }
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(4)
}

/// Splits `n` into per-category counts by largest remainder.
fn quotas(n: usize, categories: &[CategorySpec]) -> Vec<usize> {
    let exact: Vec<f64> = categories.iter().map(|c| c.proportion * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..categories.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Picks `k` distinct annotators per comment by dealing from a queue that is
/// refilled with a fresh shuffle of all annotators whenever it runs dry.
fn allocate(n_annotators: usize, n_comments: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = seed::rng(seed);
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(n_comments);
    for _ in 0..n_comments {
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        let mut deferred = Vec::new();
        while chosen.len() < k {
            if queue.is_empty() {
                let mut pass: Vec<usize> = (0..n_annotators).collect();
                pass.shuffle(&mut rng);
                queue.extend(pass);
            }
            let a = queue.pop_front().expect("queue refilled");
            if chosen.contains(&a) {
                deferred.push(a);
            } else {
                chosen.push(a);
            }
        }
        for a in deferred.into_iter().rev() {
            queue.push_front(a);
        }
        chosen.sort_unstable();
        out.push(chosen);
    }
    out
}

/// Placeholder text: a bucket token, `hot`/`cold` counts that grow and
/// shrink with the bucket, and a few random filler words.
fn comment_text<R: Rng>(t: f64, rng: &mut R) -> String {
    let bucket = ((t + 4.0) / 0.5).floor().clamp(0.0, TOP_BUCKET as f64) as usize;
    let mut words = vec![format!("level{bucket}")];
    words.extend(std::iter::repeat_n("hot".to_string(), bucket));
    words.extend(std::iter::repeat_n("cold".to_string(), TOP_BUCKET - bucket));
    for _ in 0..FILLER_TOKENS {
        words.push(format!("w{}", rng.random_range(0..FILLER_VOCAB)));
    }
    words.join(" ")
}

/// Generates a corpus and its latent values. Ratings are emitted as 0 for a
/// non-toxic draw and 3 for a toxic draw.
pub fn generate_population(spec: &PopulationSpec) -> Result<(Corpus, Latents)> {
    spec.validate()?;
    let aw = id_width(spec.n_annotators);
    let cw = id_width(spec.n_comments);
    let annotator_ids: Vec<String> = (0..spec.n_annotators).map(|i| format!("a{i:0aw$}")).collect();
    let comment_ids: Vec<String> = (0..spec.n_comments).map(|j| format!("c{j:0cw$}")).collect();

    let mut people_rng = seed::rng(seed::derive_seed(spec.seed, &[1]));
    let mut thresholds = vec![spec.beta0; spec.n_annotators];
    let mut attributes: Vec<BTreeMap<String, String>> = vec![BTreeMap::new(); spec.n_annotators];
    for attr in &spec.attributes {
        let mut labels: Vec<usize> = quotas(spec.n_annotators, &attr.categories)
            .into_iter()
            .enumerate()
            .flat_map(|(c, n)| std::iter::repeat_n(c, n))
            .collect();
        labels.shuffle(&mut people_rng);
        for (a, &c) in labels.iter().enumerate() {
            let cat = &attr.categories[c];
            thresholds[a] += cat.offset;
            attributes[a].insert(attr.name.clone(), cat.name.clone());
        }
    }
    let noise = Normal::new(0.0, spec.sigma_individual)
        .map_err(|e| Error::config(format!("sigma_individual: {e}")))?;
    for theta in thresholds.iter_mut() {
        *theta += noise.sample(&mut people_rng);
    }

    let allocation = allocate(
        spec.n_annotators,
        spec.n_comments,
        spec.annotations_per_comment,
        seed::derive_seed(spec.seed, &[2]),
    );

    let comment_seed = seed::derive_seed(spec.seed, &[3]);
    let latent = Normal::new(spec.mu_t, 1.0).expect("unit variance");
    let mut comments = BTreeMap::new();
    let mut comment_t = BTreeMap::new();
    let mut annotations = Vec::with_capacity(spec.n_comments * spec.annotations_per_comment);
    for (j, annotators) in allocation.iter().enumerate() {
        let mut rng = seed::stream_rng(comment_seed, j as u64);
        let t = latent.sample(&mut rng);
        for &a in annotators {
            let p = annotation_probability(t, thresholds[a], spec.tau)?;
            let rating = if rng.random::<f64>() < p { 3 } else { 0 };
            annotations.push(AnnotationRecord::new(
                comment_ids[j].clone(),
                annotator_ids[a].clone(),
                Rating::new(rating)?,
            ));
        }
        comments.insert(comment_ids[j].clone(), comment_text(t, &mut rng));
        comment_t.insert(comment_ids[j].clone(), t);
    }

    let profiles: Vec<AnnotatorProfile> = annotator_ids
        .iter()
        .zip(attributes)
        .map(|(id, attributes)| AnnotatorProfile {
            id: id.clone(),
            attributes,
        })
        .collect();
    let schema = spec.attributes.iter().map(|a| a.name.clone()).collect();
    let corpus = Corpus::new(schema, comments, profiles, annotations)?;
    let annotator_theta = annotator_ids.into_iter().zip(thresholds).collect();
    Ok((
        corpus,
        Latents {
            comment_t,
            annotator_theta,
        },
    ))
}

/// Generates a population and writes the canonical corpus files plus
/// `latents.csv` into `dir`.
pub fn generate_to_dir(spec: &PopulationSpec, dir: &Path) -> Result<(Corpus, Latents)> {
    let (corpus, latents) = generate_population(spec)?;
    corpus::write_corpus(&corpus, dir)?;
    latents.write_csv(&dir.join(LATENTS_FILE))?;
    Ok((corpus, latents))
}

#[cfg(test)]
mod tests;
