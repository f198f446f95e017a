use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::{CorpusPaths, IngestOptions, ShuffleMode, UnderageFilter};
use crate::error::{Error, Result};
use crate::evalsplit::{DEFAULT_FOLDS, DEFAULT_RUN_SEEDS};
use crate::features::{FeaturizerKind, FeaturizerSpec};
use crate::kvconfig::KvConfig;
use crate::model::{InitScheme, ModelMode};
use crate::stats::BootstrapConfig;
use crate::synthgen::PopulationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Baseline,
    Sociodemographic,
    Random,
    MajorityToxic,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Baseline,
        ModelKind::Sociodemographic,
        ModelKind::Random,
        ModelKind::MajorityToxic,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Sociodemographic => "sociodemographic",
            ModelKind::Random => "random",
            ModelKind::MajorityToxic => "majority_toxic",
        }
    }

    /// Trainable architecture, if any.
    pub fn mode(self) -> Option<ModelMode> {
        match self {
            ModelKind::Baseline => Some(ModelMode::Baseline),
            ModelKind::Sociodemographic => Some(ModelMode::Sociodemographic),
            ModelKind::Random => Some(ModelMode::Random),
            ModelKind::MajorityToxic => None,
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Files {
        paths: CorpusPaths,
        ingest: IngestOptions,
        /// Annotator target and seed for comment sampling.
        sample: Option<(usize, u64)>,
    },
    Synthetic(PopulationSpec),
}

fn resolve_path(base_dir: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base_dir.join(p)
    }
}

impl CorpusSource {
    /// Reads `corpus.*` keys (and `synthetic.*` for generated corpora).
    pub fn from_kv(cfg: &KvConfig, base_dir: &Path) -> Result<Self> {
        let resolve = |p: &str| resolve_path(base_dir, p);
        let source = match cfg
            .get_or("corpus.source", "synthetic".to_string())?
            .as_str()
        {
            "synthetic" => CorpusSource::Synthetic(PopulationSpec::from_kv(cfg, "synthetic.")?),
            "files" => {
                let paths = CorpusPaths {
                    annotations: resolve(&cfg.require::<String>("corpus.annotations")?),
                    comments: resolve(&cfg.require::<String>("corpus.comments")?),
                    annotators: cfg.get::<String>("corpus.annotators")?.map(|p| resolve(&p)),
                };
                let underage = if cfg.get_or("corpus.drop_underage", false)? {
                    Some(UnderageFilter {
                        attribute: cfg.get_or("corpus.age_attribute", "age".to_string())?,
                        categories: cfg
                            .get_list("corpus.underage_categories")?
                            .unwrap_or_else(|| vec!["Under 18".to_string()]),
                    })
                } else {
                    None
                };
                let sample = match cfg.get::<usize>("corpus.sample_target")? {
                    Some(target) => Some((target, cfg.require("corpus.sample_seed")?)),
                    None => None,
                };
                CorpusSource::Files {
                    paths,
                    ingest: IngestOptions { underage },
                    sample,
                }
            }
            other => return Err(Error::config(format!("unknown corpus.source `{other}`"))),
        };
        Ok(source)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub init: InitScheme,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            init: InitScheme::ScaledRandom,
            learning_rate: 1e-5,
            epochs: 3,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub features: FeaturizerSpec,
    pub features_path: Option<PathBuf>,
    pub attributes: Vec<String>,
    pub models: Vec<ModelKind>,
    pub k: usize,
    pub run_seeds: Vec<u64>,
    pub training: TrainingConfig,
    /// The seed field is ignored; per-test seeds derive from `seed`.
    pub bootstrap: BootstrapConfig,
    pub shuffle_mode: ShuffleMode,
    /// Master seed for training, group shuffles and bootstrap resampling.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub write_predictions: bool,
    pub save_checkpoints: bool,
}

impl ExperimentConfig {
    /// Default protocol settings around the given corpus source.
    pub fn new(corpus: CorpusSource, attributes: Vec<String>, output_dir: PathBuf) -> Self {
        Self {
            corpus,
            features: FeaturizerSpec::hashed(768, 0),
            features_path: None,
            attributes,
            models: vec![
                ModelKind::Baseline,
                ModelKind::Sociodemographic,
                ModelKind::Random,
            ],
            k: DEFAULT_FOLDS,
            run_seeds: DEFAULT_RUN_SEEDS.to_vec(),
            training: TrainingConfig::default(),
            bootstrap: BootstrapConfig::default(),
            shuffle_mode: ShuffleMode::Permutation,
            seed: 0,
            output_dir,
            write_predictions: true,
            save_checkpoints: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::config(
                "experiment.attributes must name at least one attribute",
            ));
        }
        if self.models.is_empty() {
            return Err(Error::config(
                "experiment.models must name at least one model",
            ));
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return Err(Error::config(format!("model `{}` listed twice", m.tag())));
            }
        }
        if self.k < 2 {
            return Err(Error::config("folds.k must be at least 2"));
        }
        if self.run_seeds.is_empty() {
            return Err(Error::config("folds.run_seeds must not be empty"));
        }
        if self.training.batch_size == 0 {
            return Err(Error::config("train.batch_size must be positive"));
        }
        if !(self.training.learning_rate > 0.0) {
            return Err(Error::config("train.learning_rate must be positive"));
        }
        self.features.validate()?;
        self.bootstrap.validate()
    }

    /// Reads a flat key-value config. Relative paths are resolved against
    /// `base_dir`. Unknown keys are rejected.
    pub fn from_kv(cfg: &KvConfig, base_dir: &Path) -> Result<Self> {
        let resolve = |p: &str| resolve_path(base_dir, p);
        let corpus = CorpusSource::from_kv(cfg, base_dir)?;

        let d = Self::new(corpus, Vec::new(), PathBuf::new());
        let features = FeaturizerSpec {
            kind: cfg.get_or("features.kind", FeaturizerKind::HashedBow)?,
            dim: cfg.get_or("features.dim", d.features.dim)?,
            seed: cfg.get_or("features.seed", d.features.seed)?,
            max_tokens: cfg.get_or("features.max_tokens", d.features.max_tokens)?,
        };
        let features_path = cfg.get::<String>("features.path")?.map(|p| resolve(&p));
        let training = TrainingConfig {
            init: cfg.get_or("train.init", d.training.init)?,
            learning_rate: cfg.get_or("train.learning_rate", d.training.learning_rate)?,
            epochs: cfg.get_or("train.epochs", d.training.epochs)?,
            batch_size: cfg.get_or("train.batch_size", d.training.batch_size)?,
        };
        let bootstrap = BootstrapConfig {
            n_samples: cfg.get_or("bootstrap.n_samples", d.bootstrap.n_samples)?,
            sample_ratio: cfg.get_or("bootstrap.sample_ratio", d.bootstrap.sample_ratio)?,
            alpha: cfg.get_or("bootstrap.alpha", d.bootstrap.alpha)?,
            seed: 0,
        };
        let out = Self {
            features,
            features_path,
            attributes: cfg
                .get_list("experiment.attributes")?
                .ok_or_else(|| Error::config("missing required key `experiment.attributes`"))?,
            models: cfg
                .get_list("experiment.models")?
                .unwrap_or(d.models.clone()),
            k: cfg.get_or("folds.k", d.k)?,
            run_seeds: cfg
                .get_list("folds.run_seeds")?
                .unwrap_or(d.run_seeds.clone()),
            training,
            bootstrap,
            shuffle_mode: cfg.get_or("shuffle.mode", d.shuffle_mode)?,
            seed: cfg.get_or("experiment.seed", d.seed)?,
            output_dir: resolve(&cfg.get_or("output.dir", "results".to_string())?),
            write_predictions: cfg.get_or("output.predictions", true)?,
            save_checkpoints: cfg.get_or("output.checkpoints", false)?,
            corpus: d.corpus,
        };
        cfg.ensure_all_used()?;
        out.validate()?;
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg = KvConfig::from_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_kv(&cfg, base)
    }

    pub fn has(&self, model: ModelKind) -> bool {
        self.models.contains(&model)
    }
}
