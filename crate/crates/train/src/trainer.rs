//! Mini-batch training over within-subject pairs with early stopping.

use std::collections::HashMap;

use log::{debug, info};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repsense_core::synth::derive_seed;
use repsense_core::{AxisScaler, Exercise, MetricKind};
use repsense_model::{argmax, cosine, Adam, AdamConfig, Checkpoint, Graph, Mode, Model, ModelConfig, ModelError, ParamStore, WindowTensor};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Pair};
use crate::error::{Result, TrainError};
use crate::loss::batch_loss;

/// Segments encoded per graph when only forward passes are needed.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Similarity target and classification head.
    pub metric: MetricKind,
    /// Upper bound on pairs per optimizer step.
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    /// Weight of the cross-entropy term.
    pub alpha: f64,
    pub seed: u64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Share of each subject's pairs drawn per epoch.
    pub pair_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            metric: MetricKind::Rom,
            batch_size: 1024,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epochs: 50,
            alpha: 1.0,
            seed: 0,
            patience: 10,
            pair_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::param("batch_size must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(TrainError::param(format!("alpha must be a finite value >= 0, got {}", self.alpha)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::param("Adam betas must lie in [0, 1)"));
        }
        if !(self.pair_fraction > 0.0 && self.pair_fraction <= 1.0) {
            return Err(TrainError::param(format!("pair_fraction must lie in (0, 1], got {}", self.pair_fraction)));
        }
        if self.epochs == 0 {
            return Err(TrainError::param("epochs must be at least 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean total loss over the epoch's batches.
    pub train_loss: f64,
    pub train_similarity_mse: f64,
    pub train_cross_entropy: f64,
    /// Similarity MSE on the validation pairs, in eval mode.
    pub val_mse: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: Model,
    pub scaler: AxisScaler,
    pub exercise: Exercise,
    pub metric: MetricKind,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            scaler: self.scaler.clone(),
            exercise: Some(self.exercise),
            metric: Some(self.metric),
        }
    }
}

/// Similarity targets and predictions over a set of pairs, plus per-segment
/// class labels and predictions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub classes: Vec<usize>,
    pub predicted: Vec<usize>,
}

/// The model config with its classifier sized for `metric` on `dataset`.
pub fn sized_config(model_cfg: &ModelConfig, dataset: &Dataset, metric: MetricKind) -> ModelConfig {
    ModelConfig {
        num_classes: dataset.num_classes(metric),
        ..model_cfg.clone()
    }
}

fn by_subject(dataset: &Dataset, pairs: Vec<Pair>) -> Vec<(String, Vec<Pair>)> {
    let mut out: Vec<(String, Vec<Pair>)> = Vec::new();
    for p in pairs {
        let subject = &dataset.segments[p.signal].subject_id;
        match out.iter_mut().find(|(s, _)| s == subject) {
            Some((_, v)) => v.push(p),
            None => out.push((subject.clone(), vec![p])),
        }
    }
    out
}

fn embed(model: &Model, windows: &[Option<WindowTensor>], idx: &[usize]) -> Result<Vec<Vec<f64>>> {
    let refs: Vec<&WindowTensor> = idx
        .iter()
        .map(|&i| windows[i].as_ref().expect("windows prepared for every used segment"))
        .collect();
    Ok(model.embed_all(&refs, EVAL_CHUNK)?)
}

fn pair_mse(model: &Model, windows: &[Option<WindowTensor>], idx: &[usize], pairs: &[Pair]) -> Result<f64> {
    let emb = embed(model, windows, idx)?;
    let local: HashMap<usize, usize> = idx.iter().enumerate().map(|(l, &g)| (g, l)).collect();
    let sum: f64 = pairs
        .iter()
        .map(|p| (cosine(&emb[local[&p.signal]], &emb[local[&p.anchor]]) - p.label).powi(2))
        .sum();
    Ok(sum / pairs.len() as f64)
}

fn prepare_windows(dataset: &Dataset, idx: &[usize], scaler: &AxisScaler, cfg: &ModelConfig) -> Result<Vec<Option<WindowTensor>>> {
    let mut windows = vec![None; dataset.len()];
    for &i in idx {
        if windows[i].is_none() {
            windows[i] = Some(repsense_model::slide_segment(&dataset.segments[i], scaler, cfg)?);
        }
    }
    Ok(windows)
}

/// Trains on `train` and early-stops on the similarity MSE of `val`. With no
/// validation segments the training pairs stand in.
pub fn train(dataset: &Dataset, train: &[usize], val: &[usize], model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::data("no training segments"));
    }
    let model_cfg = sized_config(model_cfg, dataset, cfg.metric);
    let scaler = dataset.fit_scaler(train, "training split")?;
    let all: Vec<usize> = train.iter().chain(val).copied().collect();
    let windows = prepare_windows(dataset, &all, &scaler, &model_cfg)?;
    let mut classes = vec![0; dataset.len()];
    if cfg.alpha > 0.0 {
        for &i in &all {
            classes[i] = dataset.class_of(i, cfg.metric)?;
        }
    }

    let subjects = by_subject(dataset, dataset.pairs(train, cfg.metric)?);
    let (val_idx, val_pairs) = if val.is_empty() {
        (train.to_vec(), dataset.pairs(train, cfg.metric)?)
    } else {
        (val.to_vec(), dataset.pairs(val, cfg.metric)?)
    };

    let mut model = Model::new(model_cfg, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam(), &model.params);
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, epoch as u64]));
        let mut order: Vec<usize> = (0..subjects.len()).collect();
        order.shuffle(&mut rng);

        let (mut total, mut sim_total, mut ce_total, mut batches, mut pair_count) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for &s in &order {
            let (subject, pairs) = &subjects[s];
            let take = ((pairs.len() as f64 * cfg.pair_fraction).ceil() as usize).clamp(1, pairs.len());
            let drawn: Vec<Pair> = index::sample(&mut rng, pairs.len(), take).into_iter().map(|k| pairs[k]).collect();
            for chunk in drawn.chunks(cfg.batch_size) {
                let mut local: HashMap<usize, usize> = HashMap::new();
                let mut members: Vec<usize> = Vec::new();
                let mut slot = |i: usize| {
                    *local.entry(i).or_insert_with(|| {
                        members.push(i);
                        members.len() - 1
                    })
                };
                let pair_idx: Vec<(usize, usize)> = chunk.iter().map(|p| (slot(p.signal), slot(p.anchor))).collect();
                let refs: Vec<&WindowTensor> = members.iter().map(|&i| windows[i].as_ref().unwrap()).collect();

                let mut g = Graph::new(Mode::Train {
                    seed: derive_seed(cfg.seed, &[2, epoch as u64, batches as u64]),
                });
                let enc = model.encode_graph(&mut g, &refs)?;
                let logits = (cfg.alpha > 0.0).then(|| model.logits_graph(&mut g, enc.pooled));
                let (loss, sim, ce) = batch_loss(
                    &mut g,
                    enc.pooled,
                    logits,
                    pair_idx,
                    chunk.iter().map(|p| p.label).collect(),
                    members.iter().map(|&i| classes[i]).collect(),
                    cfg.alpha,
                );
                let value = g.value(loss).item();
                let fail = |detail: String| TrainError::NonFinite {
                    epoch,
                    batch: batches,
                    subject: subject.clone(),
                    detail,
                };
                if !value.is_finite() {
                    return Err(fail(format!(
                        "loss = {value} (similarity {}, {} pairs over {} segments)",
                        g.value(sim).item(),
                        chunk.len(),
                        members.len()
                    )));
                }
                let grads = g.backward(loss);
                let grads = model.params.collect_grads(&g, &grads).map_err(|e| match e {
                    ModelError::NonFinite(what) => fail(format!("gradient of {what}")),
                    other => other.into(),
                })?;
                adam.step(&mut model.params, &grads);

                total += value;
                sim_total += g.value(sim).item();
                ce_total += ce.map_or(0.0, |c| g.value(c).item());
                batches += 1;
                pair_count += chunk.len();
            }
        }

        let val_mse = pair_mse(&model, &windows, &val_idx, &val_pairs)?;
        let log = EpochLog {
            epoch,
            train_loss: total / batches as f64,
            train_similarity_mse: sim_total / batches as f64,
            train_cross_entropy: ce_total / batches as f64,
            val_mse,
            pairs: pair_count,
        };
        debug!(
            "epoch {epoch}: loss {:.5} sim {:.5} ce {:.5} val {:.5}",
            log.train_loss, log.train_similarity_mse, log.train_cross_entropy, val_mse
        );
        history.push(log);

        if best.as_ref().map_or(true, |(_, b, _)| val_mse < *b) {
            best = Some((epoch, val_mse, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                info!("early stop after epoch {epoch}: no validation gain for {stale} epochs");
                break;
            }
        }
    }

    let (best_epoch, best_val_mse, params) = best.expect("at least one epoch ran");
    model.params = params;
    Ok(TrainOutcome {
        model,
        scaler,
        exercise: dataset.exercise,
        metric: cfg.metric,
        history,
        best_epoch,
        best_val_mse,
    })
}

/// Eval-mode predictions for the within-subject pairs and segments at `idx`.
pub fn predict(model: &Model, scaler: &AxisScaler, dataset: &Dataset, idx: &[usize], metric: MetricKind) -> Result<Predictions> {
    let windows = prepare_windows(dataset, idx, scaler, &model.cfg)?;
    let emb = embed(model, &windows, idx)?;
    let local: HashMap<usize, usize> = idx.iter().enumerate().map(|(l, &g)| (g, l)).collect();
    let pairs = dataset.pairs(idx, metric)?;
    let mut out = Predictions::default();
    for p in &pairs {
        out.y.push(p.label);
        out.y_hat.push(cosine(&emb[local[&p.signal]], &emb[local[&p.anchor]]));
    }
    for (l, &i) in idx.iter().enumerate() {
        out.classes.push(dataset.class_of(i, metric)?);
        out.predicted.push(argmax(&model.classify_embedding(&emb[l])));
    }
    Ok(out)
}
