//! Minibatch Adam training for the classifier and the regressor.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::{Embedding, EmbedderConfig};
use super::mlp::{Gradient, Head, MlpParams, Target};
use super::TextModel;
use crate::corpus::{label_of, level_of, Corpus, ObservationRecord, Split};
use crate::error::{Error, Result};
use crate::humansensor::QuantizationScheme;
use crate::random::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 16,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden: vec![128, 64],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: usize) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            t: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
        }
    }

    pub fn step(&mut self, model: &mut MlpParams, grad: &Gradient) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        let mut offset = 0;
        for (params, grads) in model.param_slices_mut(grad) {
            let n = params.len();
            let m = &mut self.m[offset..offset + n];
            let v = &mut self.v[offset..offset + n];
            for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
            offset += n;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Classifier only.
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub initial: EpochMetrics,
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept (lowest validation loss; last epoch without validation data).
    pub best_epoch: usize,
}

impl TrainMetrics {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs.last().unwrap_or(&self.initial).train_loss
    }

    pub fn selected(&self) -> &EpochMetrics {
        if self.best_epoch == 0 {
            &self.initial
        } else {
            &self.epochs[self.best_epoch - 1]
        }
    }
}

struct Sample {
    embedding: Embedding,
    target: Target,
}

fn embed_split(
    records: &[&ObservationRecord],
    embedder: &EmbedderConfig,
    target: impl Fn(&ObservationRecord) -> Result<Target>,
) -> Result<Vec<Sample>> {
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let embeddings = embedder.build()?.embed_batch(&texts)?;
    records
        .iter()
        .zip(embeddings)
        .map(|(r, embedding)| Ok(Sample { embedding, target: target(r)? }))
        .collect()
}

/// 1-based index of the largest logit; the first one wins ties.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best + 1
}

fn evaluate(model: &MlpParams, samples: &[Sample]) -> Result<(f64, Option<f64>)> {
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let z = model.logits(&s.embedding)?;
            let loss = model.loss_from_logits(&z, s.target)?;
            let hit = matches!(s.target, Target::Label(l) if argmax(&z) == l);
            Ok((loss, hit))
        })
        .collect::<Result<Vec<_>>>()?;
    // Summed in sample order so the result does not depend on scheduling.
    let loss: f64 = per_sample.iter().map(|(l, _)| l).sum();
    let correct = per_sample.iter().filter(|(_, h)| *h).count();
    let n = samples.len().max(1) as f64;
    let accuracy = (model.head == Head::Softmax).then(|| correct as f64 / n);
    Ok((loss / n, accuracy))
}

fn epoch_metrics(model: &MlpParams, epoch: usize, train: &[Sample], val: &[Sample]) -> Result<EpochMetrics> {
    let (train_loss, _) = evaluate(model, train)?;
    let (val_loss, val_accuracy) = if val.is_empty() {
        (None, None)
    } else {
        let (l, a) = evaluate(model, val)?;
        (Some(l), a)
    };
    Ok(EpochMetrics { epoch, train_loss, val_loss, val_accuracy })
}

fn fit(
    mut model: MlpParams,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<(MlpParams, TrainMetrics)> {
    if train.is_empty() {
        return Err(Error::Corpus("training split is empty".into()));
    }
    let mut rng = stream(cfg.seed, 2);
    let mut adam = Adam::new(cfg, model.param_count());
    let initial = epoch_metrics(&model, 0, train, val)?;
    let mut best = (initial.val_loss.unwrap_or(f64::INFINITY), 0usize, model.clone());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = Gradient::zeros_like(&model);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += model.accumulate_gradient(&train[i].embedding, train[i].target, scale, &mut grad)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch });
            }
            adam.step(&mut model, &grad);
        }
        let metrics = epoch_metrics(&model, epoch, train, val)?;
        if !metrics.train_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        match metrics.val_loss {
            Some(v) if v < best.0 => best = (v, epoch, model.clone()),
            None => best = (f64::INFINITY, epoch, model.clone()),
            _ => {}
        }
        epochs.push(metrics);
    }
    let (_, best_epoch, best_model) = best;
    Ok((best_model, TrainMetrics { initial, epochs, best_epoch }))
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

/// Trains the text-to-label-distribution classifier on the train split,
/// selecting parameters by validation loss.
pub fn train_classifier(
    corpus: &Corpus,
    scheme: &QuantizationScheme,
    embedder: &EmbedderConfig,
    cfg: &TrainConfig,
) -> Result<(TextModel, TrainMetrics)> {
    cfg.validate()?;
    let target = |r: &ObservationRecord| label_of(r, scheme).map(Target::Label);
    let train = embed_split(&corpus.split(Split::Train).collect::<Vec<_>>(), embedder, target)?;
    let val = embed_split(&corpus.split(Split::Val).collect::<Vec<_>>(), embedder, target)?;
    let sizes = layer_sizes(embedder.dim(), &cfg.hidden, scheme.levels());
    let init = MlpParams::init(&sizes, Head::Softmax, &mut stream(cfg.seed, 3))?;
    let (mlp, metrics) = fit(init, &train, &val, cfg)?;
    Ok((TextModel::new(embedder.clone(), mlp, cfg.seed)?, metrics))
}

/// Trains the level regressor. Returns the validation MSE of the selected
/// parameters, in squared level units.
pub fn train_regressor(
    corpus: &Corpus,
    scheme: &QuantizationScheme,
    embedder: &EmbedderConfig,
    cfg: &TrainConfig,
) -> Result<(TextModel, TrainMetrics, f64)> {
    cfg.validate()?;
    if scheme.lo() != 0.0 {
        return Err(Error::Config("the regressor's sigmoid head assumes a range starting at 0".into()));
    }
    let target = |r: &ObservationRecord| Ok(Target::Value(level_of(r.level_ratio, scheme)));
    let train = embed_split(&corpus.split(Split::Train).collect::<Vec<_>>(), embedder, target)?;
    let val = embed_split(&corpus.split(Split::Val).collect::<Vec<_>>(), embedder, target)?;
    if val.is_empty() {
        return Err(Error::Corpus("regressor calibration needs a non-empty validation split".into()));
    }
    let sizes = layer_sizes(embedder.dim(), &cfg.hidden, 1);
    let head = Head::SigmoidScaled { scale: scheme.hi() };
    let init = MlpParams::init(&sizes, head, &mut stream(cfg.seed, 3))?;
    let (mlp, metrics) = fit(init, &train, &val, cfg)?;
    let val_mse = metrics.selected().val_loss.expect("validation split is non-empty");
    let mut model = TextModel::new(embedder.clone(), mlp, cfg.seed)?;
    model.val_mse = Some(val_mse);
    Ok((model, metrics, val_mse))
}
