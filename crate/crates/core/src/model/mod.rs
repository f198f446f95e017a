//! Multi-annotator classifiers over frozen features.
//!
//! Every annotator has a linear two-class head. The group modes insert a
//! linear layer shared by all annotators of one group between the features
//! and the heads:
//!
//! * baseline: `logits = V_a x + c_a`
//! * sociodemographic / random: `h = W_g x + b_g`, `logits = V_a h + c_a`
//!
//! The random mode is the same architecture trained on a shuffled group
//! assignment.

mod checkpoint;
mod train;

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::Rng;

use crate::corpus::{BinaryLabel, GroupScheme};
use crate::error::{Error, Result};
use crate::seed;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use train::{train, Adam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelMode {
    Baseline,
    Sociodemographic,
    Random,
}

impl ModelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::Baseline => "baseline",
            ModelMode::Sociodemographic => "sociodemographic",
            ModelMode::Random => "random",
        }
    }

    pub fn uses_groups(self) -> bool {
        self != ModelMode::Baseline
    }
}

impl FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ModelMode::Baseline),
            "sociodemographic" => Ok(ModelMode::Sociodemographic),
            "random" => Ok(ModelMode::Random),
            _ => Err(Error::config(format!("unknown model mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Weights uniform on `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    #[default]
    ScaledRandom,
    /// As `ScaledRandom` for heads; group layers start as the identity.
    IdentityGroup,
}

impl InitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::ScaledRandom => "scaled_random",
            InitScheme::IdentityGroup => "identity_group",
        }
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled_random" => Ok(InitScheme::ScaledRandom),
            "identity_group" => Ok(InitScheme::IdentityGroup),
            _ => Err(Error::config(format!("unknown init scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub mode: ModelMode,
    /// Required for the group modes; ignored by the baseline.
    pub group_scheme: Option<GroupScheme>,
    pub init: InitScheme,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Baseline configuration with the default training hyperparameters.
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            mode: ModelMode::Baseline,
            group_scheme: None,
            init: InitScheme::ScaledRandom,
            learning_rate: 1e-5,
            epochs: 3,
            batch_size: 8,
            seed,
        }
    }

    pub fn with_groups(mut self, mode: ModelMode, scheme: GroupScheme) -> Self {
        self.mode = mode;
        self.group_scheme = Some(scheme);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("feature dimension must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.mode.uses_groups() && self.group_scheme.is_none() {
            return Err(Error::config(format!(
                "{} model needs a group scheme",
                self.mode.as_str()
            )));
        }
        Ok(())
    }

    fn scheme(&self) -> Option<&GroupScheme> {
        if self.mode.uses_groups() {
            self.group_scheme.as_ref()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub group_layer: usize,
    pub head: usize,
    pub groups_total: usize,
    pub heads_total: usize,
    pub total: usize,
}

/// Trainable parameter counts. The baseline has no group layers, so
/// `n_groups` is ignored for it.
pub fn param_count(dim: usize, mode: ModelMode, n_groups: usize, n_annotators: usize) -> ParamCounts {
    let group_layer = dim * dim + dim;
    let head = 2 * dim + 2;
    let groups_total = if mode.uses_groups() { n_groups * group_layer } else { 0 };
    let heads_total = n_annotators * head;
    ParamCounts {
        group_layer,
        head,
        groups_total,
        heads_total,
        total: groups_total + heads_total,
    }
}

/// Per-annotator class weights, indexed by [`BinaryLabel::index`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassWeights {
    weights: BTreeMap<String, [f64; 2]>,
}

impl ClassWeights {
    pub fn from_map(weights: BTreeMap<String, [f64; 2]>) -> Self {
        Self { weights }
    }

    pub fn get(&self, annotator: &str) -> Option<[f64; 2]> {
        self.weights.get(annotator).copied()
    }

    pub fn weight(&self, annotator: &str, label: BinaryLabel) -> Option<f64> {
        self.get(annotator).map(|w| w[label.index()])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &[f64; 2])> {
        self.weights.iter()
    }
}

/// Inverse-frequency weights with add-one smoothing:
/// `w[a][c] = N_a / (2 (N_{a,c} + 1))`.
pub fn class_weights<'a, I>(annotations: I) -> ClassWeights
where
    I: IntoIterator<Item = (&'a str, BinaryLabel)>,
{
    let mut counts: BTreeMap<String, [usize; 2]> = BTreeMap::new();
    for (a, y) in annotations {
        counts.entry(a.to_string()).or_default()[y.index()] += 1;
    }
    let weights = counts
        .into_iter()
        .map(|(a, c)| {
            let n = (c[0] + c[1]) as f64;
            (a, [n / (2.0 * (c[0] as f64 + 1.0)), n / (2.0 * (c[1] as f64 + 1.0))])
        })
        .collect();
    ClassWeights { weights }
}

/// Max-shifted softmax over two logits.
pub fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

/// Weighted cross-entropy `-w log softmax(logits)[y]`.
pub fn loss(logits: [f64; 2], y: BinaryLabel, weight: f64) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    weight * (lse - logits[y.index()])
}

/// Argmax with ties going to toxic.
pub fn predict_from_logits(logits: [f64; 2]) -> BinaryLabel {
    if logits[1] >= logits[0] {
        BinaryLabel::Toxic
    } else {
        BinaryLabel::NonToxic
    }
}

/// All trainable values in one flat vector.
///
/// Layout: group layers in ascending group order (`W_g` row-major `D x D`,
/// then `b_g`), followed by annotator heads in sorted id order (`V_a`
/// row-major `2 x D`, then `c_a`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dim: usize,
    n_groups: usize,
    annotators: Vec<String>,
    index: BTreeMap<String, usize>,
    /// Group of each head; empty for the baseline.
    head_group: Vec<usize>,
    values: Vec<f64>,
}

impl ModelParams {
    /// Zero-valued parameters for the given heads. `head_group` must be
    /// empty when `n_groups == 0` and name a group per head otherwise.
    pub fn zeros(dim: usize, n_groups: usize, annotators: Vec<String>, head_group: Vec<usize>) -> Result<Self> {
        if n_groups > 0 && head_group.len() != annotators.len() {
            return Err(Error::input("every head needs a group"));
        }
        if n_groups == 0 && !head_group.is_empty() {
            return Err(Error::input("group assignment given without group layers"));
        }
        if head_group.iter().any(|&g| g >= n_groups) {
            return Err(Error::input("head assigned to a missing group"));
        }
        let mut index = BTreeMap::new();
        for (i, a) in annotators.iter().enumerate() {
            if index.insert(a.clone(), i).is_some() {
                return Err(Error::input(format!("duplicate annotator `{a}`")));
            }
        }
        if annotators.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("annotators must be sorted"));
        }
        let len = n_groups * (dim * dim + dim) + annotators.len() * (2 * dim + 2);
        Ok(Self {
            dim,
            n_groups,
            annotators,
            index,
            head_group,
            values: vec![0.0; len],
        })
    }

    /// Initial parameters for `config` with one head per annotator in
    /// `annotators` (any order; duplicates removed).
    pub fn init(config: &ModelConfig, annotators: &[String]) -> Result<Self> {
        config.validate()?;
        let mut ids = annotators.to_vec();
        ids.sort();
        ids.dedup();
        let dim = config.dim;
        let (n_groups, head_group) = match config.scheme() {
            Some(scheme) => {
                let groups = ids
                    .iter()
                    .map(|a| {
                        scheme.group_of(a).ok_or_else(|| {
                            Error::config(format!("annotator `{a}` missing from the group scheme"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                (scheme.n_groups(), groups)
            }
            None => (0, Vec::new()),
        };
        let mut params = Self::zeros(dim, n_groups, ids, head_group)?;

        // Separate streams keep head initialisation identical across modes.
        let mut head_rng = seed::stream_rng(config.seed, 0);
        let head_limit = (6.0 / (dim as f64 + 2.0)).sqrt();
        for a in 0..params.annotators.len() {
            for v in params.head_weight_mut(a) {
                *v = head_rng.random_range(-head_limit..=head_limit);
            }
        }
        let mut group_rng = seed::stream_rng(config.seed, 1);
        let group_limit = (6.0 / (2.0 * dim as f64)).sqrt();
        for g in 0..n_groups {
            let w = params.group_weight_mut(g);
            match config.init {
                InitScheme::ScaledRandom => {
                    for v in w {
                        *v = group_rng.random_range(-group_limit..=group_limit);
                    }
                }
                InitScheme::IdentityGroup => {
                    for i in 0..dim {
                        w[i * dim + i] = 1.0;
                    }
                }
            }
        }
        Ok(params)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn head_index(&self, annotator: &str) -> Option<usize> {
        self.index.get(annotator).copied()
    }

    /// Group layer used by head `head`, if the model has group layers.
    pub fn head_group(&self, head: usize) -> Option<usize> {
        self.head_group.get(head).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn group_block(&self) -> usize {
        self.dim * self.dim + self.dim
    }

    fn head_block(&self) -> usize {
        2 * self.dim + 2
    }

    fn group_offset(&self, g: usize) -> usize {
        g * self.group_block()
    }

    fn head_offset(&self, a: usize) -> usize {
        self.n_groups * self.group_block() + a * self.head_block()
    }

    pub fn group_weight(&self, g: usize) -> &[f64] {
        let o = self.group_offset(g);
        &self.values[o..o + self.dim * self.dim]
    }

    pub fn group_weight_mut(&mut self, g: usize) -> &mut [f64] {
        let o = self.group_offset(g);
        let n = self.dim * self.dim;
        &mut self.values[o..o + n]
    }

    pub fn group_bias(&self, g: usize) -> &[f64] {
        let o = self.group_offset(g) + self.dim * self.dim;
        &self.values[o..o + self.dim]
    }

    pub fn group_bias_mut(&mut self, g: usize) -> &mut [f64] {
        let o = self.group_offset(g) + self.dim * self.dim;
        let n = self.dim;
        &mut self.values[o..o + n]
    }

    pub fn head_weight(&self, a: usize) -> &[f64] {
        let o = self.head_offset(a);
        &self.values[o..o + 2 * self.dim]
    }

    pub fn head_weight_mut(&mut self, a: usize) -> &mut [f64] {
        let o = self.head_offset(a);
        let n = 2 * self.dim;
        &mut self.values[o..o + n]
    }

    pub fn head_bias(&self, a: usize) -> &[f64] {
        let o = self.head_offset(a) + 2 * self.dim;
        &self.values[o..o + 2]
    }

    pub fn head_bias_mut(&mut self, a: usize) -> &mut [f64] {
        let o = self.head_offset(a) + 2 * self.dim;
        &mut self.values[o..o + 2]
    }

    fn check_input(&self, x: &[f64], annotator: &str) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "feature vector has dimension {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        self.head_index(annotator)
            .ok_or_else(|| Error::MissingHead(annotator.to_string()))
    }

    /// Group-layer output for head `a` written into `h`; returns false for
    /// the baseline (no transform).
    fn hidden(&self, x: &[f64], a: usize, h: &mut [f64]) -> bool {
        let Some(g) = self.head_group(a) else {
            return false;
        };
        let d = self.dim;
        let w = self.group_weight(g);
        let b = self.group_bias(g);
        for i in 0..d {
            let row = &w[i * d..(i + 1) * d];
            let mut acc = b[i];
            for j in 0..d {
                acc += row[j] * x[j];
            }
            h[i] = acc;
        }
        true
    }

    fn head_logits(&self, input: &[f64], a: usize) -> [f64; 2] {
        let d = self.dim;
        let v = self.head_weight(a);
        let c = self.head_bias(a);
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &v[k * d..(k + 1) * d];
            let mut acc = c[k];
            for i in 0..d {
                acc += row[i] * input[i];
            }
            *o = acc;
        }
        out
    }

    fn logits_at(&self, x: &[f64], a: usize, scratch: &mut Vec<f64>) -> [f64; 2] {
        scratch.resize(self.dim, 0.0);
        if self.hidden(x, a, scratch) {
            self.head_logits(scratch, a)
        } else {
            self.head_logits(x, a)
        }
    }

    pub fn logits(&self, x: &[f64], annotator: &str) -> Result<[f64; 2]> {
        let a = self.check_input(x, annotator)?;
        Ok(self.logits_at(x, a, &mut Vec::new()))
    }

    /// Adds `scale * dL/dθ` for one item into `grad` and returns the
    /// item's loss.
    fn accumulate_gradient(
        &self,
        x: &[f64],
        a: usize,
        y: BinaryLabel,
        weight: f64,
        scale: f64,
        grad: &mut [f64],
        scratch: &mut Scratch,
    ) -> f64 {
        let d = self.dim;
        scratch.h.resize(d, 0.0);
        scratch.dh.resize(d, 0.0);
        let grouped = self.hidden(x, a, &mut scratch.h);
        let input: &[f64] = if grouped { &scratch.h } else { x };
        let logits = self.head_logits(input, a);
        let item_loss = loss(logits, y, weight);

        let p = softmax(logits);
        let mut dlogits = [weight * p[0], weight * p[1]];
        dlogits[y.index()] -= weight;
        if dlogits == [0.0, 0.0] {
            return item_loss;
        }

        let ho = self.head_offset(a);
        for k in 0..2 {
            let gk = scale * dlogits[k];
            let row = &mut grad[ho + k * d..ho + (k + 1) * d];
            for i in 0..d {
                row[i] += gk * input[i];
            }
            grad[ho + 2 * d + k] += gk;
        }

        if let Some(g) = self.head_group(a).filter(|_| grouped) {
            let v = self.head_weight(a);
            for i in 0..d {
                scratch.dh[i] = scale * (v[i] * dlogits[0] + v[d + i] * dlogits[1]);
            }
            let go = self.group_offset(g);
            for i in 0..d {
                let dhi = scratch.dh[i];
                let row = &mut grad[go + i * d..go + (i + 1) * d];
                for j in 0..d {
                    row[j] += dhi * x[j];
                }
                grad[go + d * d + i] += dhi;
            }
        }
        item_loss
    }

    /// Gradient of the weighted loss of one item, laid out like the parameters.
    pub fn gradients(&self, x: &[f64], annotator: &str, y: BinaryLabel, weight: f64) -> Result<Gradients> {
        let a = self.check_input(x, annotator)?;
        let mut grad = self.zeros_like();
        let mut scratch = Scratch::default();
        self.accumulate_gradient(x, a, y, weight, 1.0, &mut grad.values, &mut scratch);
        Ok(grad)
    }

    /// Parameters of the same shape with every value zero.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }
}

/// Gradients share the parameter layout and accessors.
pub type Gradients = ModelParams;

#[derive(Debug, Default)]
struct Scratch {
    h: Vec<f64>,
    dh: Vec<f64>,
}

/// Trained parameters together with the configuration and weights used.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub class_weights: ClassWeights,
    /// Mean item loss per epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainedModel {
    pub fn forward(&self, x: &[f64], annotator: &str) -> Result<[f64; 2]> {
        self.params.logits(x, annotator)
    }

    pub fn predict(&self, x: &[f64], annotator: &str) -> Result<BinaryLabel> {
        self.forward(x, annotator).map(predict_from_logits)
    }

    pub fn has_head(&self, annotator: &str) -> bool {
        self.params.head_index(annotator).is_some()
    }
}

#[cfg(test)]
mod tests;
