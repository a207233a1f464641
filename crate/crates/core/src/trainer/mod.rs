//! Backpropagation-through-rollout training, evaluation and ablation.

mod ablation;
mod audit;
mod checkpoint;
mod loss;
mod metrics;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ablation::{ablate, AblationReport, AblationRow};
pub use audit::{gradient_audit, GradAudit};
pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_KIND};
pub use loss::{laplacian_reg, multitask_loss, rollout_loss, LossWeights};
pub use metrics::{compute_metrics, ChannelMetrics, Metrics};

use crate::case_store::{compute_norm_stats, CaseTrajectory, NormStats, DEFAULT_SPLIT};
use crate::error::{Error, Result};
use crate::optim::{clip_global_norm, Adam, Plateau, DEFAULT_CLIP, DEFAULT_LR};
use crate::surrogate::{
    rollout_batch, BatchInput, BatchTargets, CaseStatic, Feedback, ModelConfig, RolloutResult, SurrogateParams,
};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Cases per batch.
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm bound.
    pub clip: f64,
    pub seed: u64,
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub split: [f64; 3],
    pub plateau_patience: usize,
    pub plateau_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 8,
            lr: DEFAULT_LR,
            clip: DEFAULT_CLIP,
            seed: 0,
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            split: DEFAULT_SPLIT,
            plateau_patience: 3,
            plateau_factor: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) || !(self.clip > 0.0) {
            return Err(Error::InvalidInput(
                "epochs, batch size, learning rate and clip must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Writes the loss history as `epoch,train_loss,val_loss,lr` CSV.
pub fn write_history_csv(history: &[EpochRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,lr")?;
    for r in history {
        writeln!(out, "{},{:e},{:e},{:e}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
    }
    Ok(())
}

/// Prepared static inputs for a list of cases.
fn statics(cases: &[&CaseTrajectory], config: &ModelConfig) -> Result<Vec<CaseStatic>> {
    cases.iter().map(|c| CaseStatic::from_case(c, config.lambda_max)).collect()
}

/// Loss and parameter gradients of one batch.
pub fn batch_gradients(
    params: &SurrogateParams,
    statics: &[&CaseStatic],
    cases: &[&CaseTrajectory],
    stats: &NormStats,
    weights: &LossWeights,
) -> Result<(f64, Vec<crate::tape::Matrix>)> {
    let batch = BatchInput::new(statics, stats)?;
    let targets = BatchTargets::new(cases, stats)?;
    let mut tape = Tape::new();
    let fwd = params.forward(&mut tape, &batch, Feedback::Free)?;
    let loss = multitask_loss(&mut tape, &fwd, &targets, &batch, weights)?;
    let value = tape.value(loss).item();
    let mut grads = tape.backward(loss)?;
    let g = fwd.params.iter().map(|&v| grads.take(v, &tape)).collect();
    Ok((value, g))
}

/// Mean free-rollout loss over cases, without gradients.
fn mean_rollout_loss(
    params: &SurrogateParams,
    statics: &[CaseStatic],
    cases: &[&CaseTrajectory],
    stats: &NormStats,
    weights: &LossWeights,
) -> Result<f64> {
    let mut total = 0.0;
    for (s, c) in statics.iter().zip(cases) {
        let pred = predict(params, s, stats)?;
        total += rollout_loss(&pred, c, stats, &s.graph.node_graph, weights)?;
    }
    Ok(total / cases.len() as f64)
}

fn predict(params: &SurrogateParams, s: &CaseStatic, stats: &NormStats) -> Result<RolloutResult> {
    let batch = BatchInput::new(&[s], stats)?;
    Ok(rollout_batch(params, &batch, Feedback::Free)?.remove(0))
}

/// Trains from scratch on `train`, selecting the epoch with the lowest
/// validation loss. `on_epoch` sees every history record as it is made.
pub fn train(
    train: &[&CaseTrajectory],
    validation: &[&CaseTrajectory],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidInput("training needs nonempty train and validation sets".into()));
    }
    let stats = compute_norm_stats(train)?;
    let train_static = statics(train, &config.model)?;
    let val_static = statics(validation, &config.model)?;
    let mut params = SurrogateParams::init(&config.model, config.seed)?;
    let mut adam = Adam::new(config.lr);
    let mut plateau = Plateau::new(config.plateau_patience, config.plateau_factor);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_ba7c4);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(SurrogateParams, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let s: Vec<&CaseStatic> = chunk.iter().map(|&i| &train_static[i]).collect();
            let c: Vec<&CaseTrajectory> = chunk.iter().map(|&i| train[i]).collect();
            let diverged = |detail: String| Error::Divergence {
                epoch,
                batch: b,
                detail,
            };
            let (loss, mut grads) = batch_gradients(&params, &s, &c, &stats, &config.weights)
                .map_err(|e| if e.is_numerical() { diverged(e.to_string()) } else { e })?;
            if !loss.is_finite() {
                return Err(diverged(format!("loss {loss}")));
            }
            clip_global_norm(&mut grads, config.clip).map_err(|e| diverged(e.to_string()))?;
            adam.step(&mut params.tensors, &grads).map_err(|e| diverged(e.to_string()))?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = mean_rollout_loss(&params, &val_static, validation, &stats, &config.weights).map_err(|e| {
            if e.is_numerical() {
                Error::Divergence {
                    epoch,
                    batch: 0,
                    detail: format!("validation: {e}"),
                }
            } else {
                e
            }
        })?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                detail: format!("validation loss {val_loss}"),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: adam.lr,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|b| val_loss < b.2) {
            best = Some((params.clone(), epoch, val_loss));
        }
        adam.lr = plateau.step(val_loss, adam.lr);
    }
    let (params, epoch, val_loss) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best: Checkpoint {
            params,
            stats,
            train_config: config.clone(),
            epoch,
            val_loss,
        },
        history,
    })
}

/// Free-rollout predictions of a checkpoint for several cases.
pub fn predict_cases(ckpt: &Checkpoint, cases: &[&CaseTrajectory]) -> Result<Vec<RolloutResult>> {
    let s = statics(cases, &ckpt.params.config)?;
    s.iter().map(|s| predict(&ckpt.params, s, &ckpt.stats)).collect()
}

/// Free-rollout metrics. `stats` must be the checkpoint's statistics.
pub fn evaluate(ckpt: &Checkpoint, cases: &[&CaseTrajectory], stats: &NormStats) -> Result<Metrics> {
    if *stats != ckpt.stats {
        return Err(Error::StatsMismatch);
    }
    let preds = predict_cases(ckpt, cases)?;
    compute_metrics(&preds, cases, stats)
}

#[cfg(test)]
mod tests;
