//! Residual-loss training: patch sampling, backpropagation through the
//! network, Adam updates and the learning-rate schedule.

mod adam;
mod loss;
mod patches;
mod schedule;

use std::io::Write;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{FrameSequence, ImageError, ImageFrame};
use crate::network::{Model, NetworkConfig, NetworkError};
use crate::seed::derive_seed;
use crate::sim::TemporalInput;
use crate::tensor::TensorError;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use loss::residual_loss;
pub use patches::{augment_resize, sample_patches, PatchBatch, PatchOrigin, TrainingPair};
pub use schedule::lr_schedule;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("{width}x{height} image is smaller than the {patch}x{patch} patch")]
    ImageTooSmall {
        width: usize,
        height: usize,
        patch: usize,
    },
    #[error("non-finite loss at epoch {epoch}, step {step} (lr {lr:e})")]
    NonFiniteLoss { epoch: usize, step: u64, lr: f64 },
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub patch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Random per-patch rescaling range, e.g. `(0.7, 1.0)`.
    pub resize_augment: Option<(f64, f64)>,
    /// Overrides the patch-count based epoch length.
    pub steps_per_epoch: Option<usize>,
}

impl TrainingConfig {
    /// Batch 128 of 80x80 patches, lr 1e-3 to 1e-5 over 1000 epochs.
    pub fn paper() -> Self {
        TrainingConfig {
            batch_size: 128,
            patch_size: 80,
            lr_start: 1e-3,
            lr_end: 1e-5,
            epochs: 1000,
            seed: 0,
            resize_augment: None,
            steps_per_epoch: None,
        }
    }

    /// Batch 16 of 48x48 patches over 60 epochs.
    pub fn desk() -> Self {
        TrainingConfig {
            batch_size: 16,
            patch_size: 48,
            epochs: 60,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.patch_size == 0 || self.epochs == 0 {
            return bad("batch size, patch size and epochs must be positive");
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return bad("learning rates must satisfy 0 < lr_end <= lr_start");
        }
        if let Some((lo, hi)) = self.resize_augment {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad("resize range must satisfy 0 < lo <= hi");
            }
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps per epoch must be positive");
        }
        Ok(())
    }

    /// `ceil(estimated patches / batch)`, where the patch estimate is the
    /// total pair area divided by the patch area. Patches are drawn with
    /// replacement, so this only fixes the length of an epoch.
    pub fn steps_per_epoch_for(&self, pairs: &[TrainingPair]) -> usize {
        if let Some(s) = self.steps_per_epoch {
            return s;
        }
        let area: usize = pairs.iter().map(|p| p.width() * p.height()).sum();
        let patches = area.div_ceil(self.patch_size * self.patch_size);
        patches.div_ceil(self.batch_size).max(1)
    }
}

/// Named architecture + recipe combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn network(self, in_channels: usize) -> NetworkConfig {
        match self {
            Preset::Desk => NetworkConfig::desk(in_channels),
            Preset::Paper => NetworkConfig::paper(in_channels),
        }
    }

    pub fn training(self) -> TrainingConfig {
        match self {
            Preset::Desk => TrainingConfig::desk(),
            Preset::Paper => TrainingConfig::paper(),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset `{other}` (expected desk or paper)")),
        }
    }
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub epoch: usize,
    /// Global optimizer step (continues across resumed runs).
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

/// Writes the trace as `epoch,step,lr,loss` CSV.
pub fn write_loss_csv(records: &[LossRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,step,lr,loss")?;
    for r in records {
        writeln!(out, "{},{},{:e},{:e}", r.epoch, r.step, r.lr, r.loss)?;
    }
    Ok(())
}

/// Turns a scene (clean frame + distorted sequence) into training pairs for
/// the given input mode. The target carries the clean frame once per input
/// channel.
pub fn build_pairs(
    clean: &ImageFrame,
    sequence: &FrameSequence,
    mode: &TemporalInput,
) -> Result<Vec<TrainingPair>, TrainError> {
    let range = mode
        .valid_times(sequence.len())
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let copies: Vec<&ImageFrame> = (0..mode.frames()).map(|_| clean).collect();
    let target = ImageFrame::stack(&copies)?;
    range
        .map(|t| {
            let input = mode.input_at(sequence, t).map_err(|e| TrainError::Config(e.to_string()))?;
            TrainingPair::new(input, target.clone())
        })
        .collect()
}

/// Runs `epochs x steps_per_epoch` iterations of
/// sample -> forward (train mode) -> loss -> backprop -> Adam.
///
/// `optimizer` may carry state from an earlier run; its step counter keeps
/// increasing. The returned trace has one record per step.
pub fn train(
    model: &mut Model<f32>,
    optimizer: &mut AdamState<f32>,
    pairs: &[TrainingPair],
    config: &TrainingConfig,
) -> Result<Vec<LossRecord>, TrainError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let cfg = *model.config();
    if let Some(p) = pairs.iter().find(|p| p.input.channels() != cfg.in_channels) {
        return Err(TrainError::Config(format!(
            "model takes {} input channels but the data has {}",
            cfg.in_channels,
            p.input.channels()
        )));
    }
    if optimizer.lens() != model.trainable_lens() {
        return Err(TrainError::Config("optimizer state does not match the model".into()));
    }
    if config.patch_size < cfg.receptive_field() {
        warn!(
            "patch size {} is smaller than the receptive field {}",
            config.patch_size,
            cfg.receptive_field()
        );
    }
    let steps = config.steps_per_epoch_for(pairs);
    info!(
        "training {} epochs x {} steps, batch {} of {}x{} patches, {} pairs",
        config.epochs,
        steps,
        config.batch_size,
        config.patch_size,
        config.patch_size,
        pairs.len()
    );
    // A resumed run draws a fresh patch stream rather than replaying the first one.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, optimizer.step));
    let mut log = Vec::with_capacity(config.epochs * steps);
    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config)?;
        let mut epoch_loss = 0.0;
        for _ in 0..steps {
            let batch = patches::draw_patches(
                pairs,
                config.patch_size,
                config.batch_size,
                config.resize_augment,
                &mut rng,
            )?;
            let (pred, cache) = model.forward_train(&batch.inputs)?;
            let (loss, grad) = residual_loss(&pred, &batch.inputs, &batch.targets)?;
            let step = optimizer.step + 1;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step, lr });
            }
            let grads = model.backward(cache, &grad)?;
            adam_step(model.trainable_mut(), &grads.slices(), optimizer, lr);
            debug!("epoch {epoch} step {step} lr {lr:e} loss {loss:e}");
            epoch_loss += loss;
            log.push(LossRecord { epoch, step, lr, loss });
        }
        info!("epoch {epoch}: lr {lr:.3e}, mean loss {:.5e}", epoch_loss / steps as f64);
    }
    Ok(log)
}
