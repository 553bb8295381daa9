use serde::{Deserialize, Serialize};

use super::model::{SourceInput, Translator};
use crate::data::batch::Batch;
use crate::error::{invalid_arg, Result};
use crate::nn::{clip_gradients, AdamState, Graph};
use crate::rng;

/// Optimization settings for translation training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: f64,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, batch_size: 80, lr: 5e-4, clip: 5.0, max_src_len: 50, max_tgt_len: 150, seed: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_src_len == 0 || self.max_tgt_len == 0 {
            return Err(invalid_arg!("batch size and length limits must be positive"));
        }
        if !(self.lr > 0.0) || !(self.clip > 0.0) {
            return Err(invalid_arg!("lr and clip must be positive"));
        }
        Ok(())
    }
}

/// Mean per-token loss of a batch, without updating anything.
pub fn batch_loss<T: AsRef<[usize]>>(model: &Translator, inputs: &[&SourceInput], targets: &[T]) -> Result<f64> {
    let mut g = Graph::eval(&model.store);
    let (nll, tokens) = model.nll(&mut g, inputs, targets)?;
    Ok(g.value(nll).data()[0] / tokens as f64)
}

/// One update: teacher-forced mean token loss, gradient clipping, Adam.
/// `seed` drives dropout. Returns the loss before the update.
pub fn train_step<T: AsRef<[usize]>>(
    model: &mut Translator,
    inputs: &[&SourceInput],
    targets: &[T],
    adam: &mut AdamState,
    lr: f64,
    clip: f64,
    seed: u64,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(invalid_arg!("empty batch"));
    }
    let trainable = model.trainable();
    let (loss, mut grads) = {
        let mut g = Graph::new(&model.store, trainable, true, seed);
        let (nll, tokens) = model.nll(&mut g, inputs, targets)?;
        let loss = g.scale(nll, 1.0 / tokens as f64);
        g.backward(loss)?;
        (g.value(loss).data()[0], g.gradients())
    };
    clip_gradients(&mut grads, clip)?;
    adam.step(&mut model.store, &grads, lr)?;
    Ok(loss)
}

/// Runs one epoch over `batches` (built from the corpus indices of
/// `sources`/`targets`). `step` counts updates across epochs and seeds
/// dropout. Returns the token-weighted mean loss.
pub fn train_epoch(
    model: &mut Translator,
    sources: &[SourceInput],
    targets: &[Vec<usize>],
    batches: &[Batch],
    adam: &mut AdamState,
    config: &TrainConfig,
    step: &mut u64,
) -> Result<f64> {
    let (mut total, mut tokens) = (0.0, 0usize);
    for batch in batches {
        let inputs: Vec<&SourceInput> = batch.indices.iter().map(|&i| &sources[i]).collect();
        let tgts: Vec<&[usize]> = batch.indices.iter().map(|&i| targets[i].as_slice()).collect();
        let n: usize = tgts.iter().map(|t| t.len() + 1).sum();
        let seed = rng::derive_index(config.seed, *step);
        total += train_step(model, &inputs, &tgts, adam, config.lr, config.clip, seed)? * n as f64;
        tokens += n;
        *step += 1;
    }
    if tokens == 0 {
        return Err(invalid_arg!("no batches to train on"));
    }
    Ok(total / tokens as f64)
}
