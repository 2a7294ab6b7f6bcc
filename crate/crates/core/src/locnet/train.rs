use super::eval::{ErrorRecord, ErrorStats};
use super::loss::{pose_loss, pose_loss_grad};
use super::model::{image_to_chw, PoseModel};
use super::LocNetError;
use crate::render::{Dataset, Sample, Split};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Samples per gradient work unit. Gradients are summed inside a unit and then across
/// units in index order, so results do not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Heavy-ball momentum.
    Sgd,
    /// Adam with `momentum` as beta1 and beta2 = 0.999.
    Adam,
}

/// Minibatch training with step learning-rate decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiply the learning rate by `lr_decay` every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    /// Global gradient norm limit; 0 disables clipping.
    pub grad_clip: f64,
    pub direction_weight: f64,
    pub seed: u64,
    /// Evaluate the test split after every epoch.
    pub eval_test: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 16,
            optimizer: Optimizer::Adam,
            batch_size: 32,
            learning_rate: 1e-3,
            momentum: 0.9,
            lr_decay: 0.3,
            decay_every: 12,
            weight_decay: 1e-4,
            grad_clip: 5.0,
            direction_weight: 1.0,
            seed: 1,
            eval_test: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LocNetError> {
        let bad = |m: &str| Err(LocNetError::Config(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.direction_weight > 0.0) {
            return bad("direction weight must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.decay_every == 0 || !(self.lr_decay > 0.0) {
            return bad("invalid learning-rate schedule");
        }
        if self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return bad("weight decay and clip must be non-negative");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean loss over the epoch's minibatches, measured before each update.
    pub train_loss: f64,
    pub train_mean_position: f64,
    pub train_mean_angular: f64,
    pub test_loss: Option<f64>,
    pub test_mean_position: Option<f64>,
    pub test_mean_angular: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<(), LocNetError> {
        let mut w = csv::Writer::from_path(path)?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn train(
    model: PoseModel<f32>,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(PoseModel<f32>, TrainHistory), LocNetError> {
    train_with(model, dataset, config, |_| {})
}

/// Train, calling `on_epoch` after every epoch.
pub fn train_with(
    mut model: PoseModel<f32>,
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(PoseModel<f32>, TrainHistory), LocNetError> {
    config.validate()?;
    let train_set: Vec<&Sample> = dataset.split(Split::Train).collect();
    if train_set.is_empty() {
        return Err(LocNetError::Empty("train split is empty".into()));
    }
    let test_set: Vec<&Sample> = dataset.split(Split::Test).collect();
    for s in &train_set {
        model.input_tensor(&s.image)?;
    }
    let norm = model.norm;
    let lambda = config.direction_weight;
    let mut velocity = model.zero_grads();
    let mut second = model.zero_grads();
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut records = Vec::with_capacity(train_set.len());

        for batch in order.chunks(config.batch_size) {
            let parts: Vec<(Vec<Vec<f32>>, f64, Vec<ErrorRecord>)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grads = model.zero_grads();
                    let mut loss = 0.0;
                    let mut recs = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let s = train_set[i];
                        let x = image_to_chw::<f32>(&s.image);
                        let (raw, trace) = model.forward_train(&x);
                        loss += pose_loss(&raw, &s.pose, &norm, lambda);
                        recs.push(ErrorRecord::new(&s.pose, &norm.decode(&raw)));
                        model.backward(&trace, &pose_loss_grad(&raw, &s.pose, &norm, lambda), &mut grads);
                    }
                    (grads, loss, recs)
                })
                .collect();

            let mut grads = model.zero_grads();
            let mut batch_loss = 0.0;
            for (g, l, recs) in parts {
                for (acc, part) in grads.iter_mut().zip(&g) {
                    for (a, p) in acc.iter_mut().zip(part) {
                        *a += *p;
                    }
                }
                batch_loss += l;
                records.extend(recs);
            }
            if !batch_loss.is_finite() {
                return Err(LocNetError::Diverged { epoch, loss: batch_loss });
            }
            loss_sum += batch_loss;

            let scale = 1.0 / batch.len() as f64;
            let norm_sq: f64 = grads.iter().flatten().map(|&g| (g as f64 * scale).powi(2)).sum();
            let grad_norm = norm_sq.sqrt();
            let clip = if config.grad_clip > 0.0 && grad_norm > config.grad_clip {
                config.grad_clip / grad_norm
            } else {
                1.0
            };
            let g_scale = (scale * clip) as f32;
            let (mu, wd, lr32) = (config.momentum as f32, config.weight_decay as f32, lr as f32);
            step += 1;
            match config.optimizer {
                Optimizer::Sgd => {
                    for ((p, g), v) in model.params_mut().into_iter().zip(&grads).zip(&mut velocity) {
                        for ((w, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                            *vi = mu * *vi + *gi * g_scale + wd * *w;
                            *w -= lr32 * *vi;
                        }
                    }
                }
                Optimizer::Adam => {
                    const BETA2: f32 = 0.999;
                    const EPS: f32 = 1e-8;
                    let c1 = 1.0 - mu.powi(step);
                    let c2 = 1.0 - BETA2.powi(step);
                    let params = model.params_mut().into_iter().zip(&grads).zip(&mut velocity).zip(&mut second);
                    for (((p, g), m), v) in params {
                        for (((w, gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                            let gi = *gi * g_scale + wd * *w;
                            *mi = mu * *mi + (1.0 - mu) * gi;
                            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                            *w -= lr32 * (*mi / c1) / ((*vi / c2).sqrt() + EPS);
                        }
                    }
                }
            }
            if model.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(LocNetError::Diverged { epoch, loss: f64::NAN });
            }
        }

        let train_stats = ErrorStats::from_records(records)?;
        let (test_loss, test_stats) = if config.eval_test && !test_set.is_empty() {
            let (l, s) = loss_and_stats(&model, &test_set, lambda)?;
            (Some(l), Some(s))
        } else {
            (None, None)
        };
        let rec = EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_mean_position: train_stats.mean_position,
            train_mean_angular: train_stats.mean_angular,
            test_loss,
            test_mean_position: test_stats.as_ref().map(|s| s.mean_position),
            test_mean_angular: test_stats.as_ref().map(|s| s.mean_angular),
        };
        on_epoch(&rec);
        history.epochs.push(rec);
    }
    Ok((model, history))
}

fn loss_and_stats(model: &PoseModel<f32>, samples: &[&Sample], lambda: f64) -> Result<(f64, ErrorStats), LocNetError> {
    let outs = samples
        .par_iter()
        .map(|s| {
            let raw = model.forward_image(&s.image)?;
            Ok((
                pose_loss(&raw, &s.pose, &model.norm, lambda),
                ErrorRecord::new(&s.pose, &model.norm.decode(&raw)),
            ))
        })
        .collect::<Result<Vec<_>, LocNetError>>()?;
    let loss = outs.iter().map(|o| o.0).sum::<f64>() / outs.len() as f64;
    Ok((loss, ErrorStats::from_records(outs.into_iter().map(|o| o.1).collect())?))
}
