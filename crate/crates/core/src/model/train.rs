use rand::seq::SliceRandom;

use super::{class_weights, ModelConfig, ModelParams, Scratch, TrainedModel};
use crate::corpus::{AnnotationRecord, BinaryLabel};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::seed;

/// Adaptive moment estimation without weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

struct Item<'a> {
    x: &'a [f64],
    head: usize,
    label: BinaryLabel,
    weight: f64,
}

/// Stream id base for the per-epoch shuffles (streams 0 and 1 initialise
/// parameters).
const SHUFFLE_STREAM: u64 = 16;

/// Trains a model on one item per training annotation.
///
/// Each epoch shuffles the items with a seed-derived stream and walks them
/// in minibatches; the batch loss is the mean item loss and every batch is
/// followed by one optimizer step on all parameters.
pub fn train<'a, I>(annotations: I, features: &FeatureTable, config: &ModelConfig) -> Result<TrainedModel>
where
    I: IntoIterator<Item = &'a AnnotationRecord>,
{
    config.validate()?;
    let annotations: Vec<&AnnotationRecord> = annotations.into_iter().collect();
    if annotations.is_empty() {
        return Err(Error::config("cannot train on an empty fold"));
    }
    if features.dim() != config.dim {
        return Err(Error::config(format!(
            "features have dimension {}, model configured for {}",
            features.dim(),
            config.dim
        )));
    }
    let weights = class_weights(
        annotations
            .iter()
            .map(|r| (r.annotator_id.as_str(), r.label())),
    );
    let annotators: Vec<String> = weights.iter().map(|(a, _)| a.clone()).collect();
    let mut params = ModelParams::init(config, &annotators)?;

    let items = annotations
        .iter()
        .map(|r| {
            let x = features.get(&r.comment_id).ok_or_else(|| {
                Error::data(format!("no features for comment `{}`", r.comment_id))
            })?;
            let head = params.head_index(&r.annotator_id).expect("head created above");
            let weight = weights
                .weight(&r.annotator_id, r.label())
                .expect("weights cover every annotator");
            Ok(Item {
                x,
                head,
                label: r.label(),
                weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut adam = Adam::new(params.values().len(), config.learning_rate);
    let mut grad = vec![0.0; params.values().len()];
    let mut scratch = Scratch::default();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut seed::stream_rng(config.seed, SHUFFLE_STREAM + epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let it = &items[i];
                epoch_loss +=
                    params.accumulate_gradient(it.x, it.head, it.label, it.weight, scale, &mut grad, &mut scratch);
            }
            adam.step(params.values_mut(), &grad);
        }
        let mean = epoch_loss / items.len() as f64;
        log::debug!("{} epoch {epoch}: mean loss {mean:.6}", config.mode.as_str());
        loss_trace.push(mean);
    }

    Ok(TrainedModel {
        config: config.clone(),
        params,
        class_weights: weights,
        loss_trace,
    })
}
