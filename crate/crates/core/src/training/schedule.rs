use super::{TrainError, TrainingConfig};

/// Log-linear decay from `lr_start` at epoch 0 to `lr_end` at the last epoch:
/// `lr(e) = lr_start * (lr_end / lr_start)^(e / (epochs - 1))`.
pub fn lr_schedule(epoch: usize, config: &TrainingConfig) -> Result<f64, TrainError> {
    if epoch >= config.epochs {
        return Err(TrainError::Config(format!(
            "epoch {epoch} outside schedule of {} epochs",
            config.epochs
        )));
    }
    if epoch == 0 || config.epochs == 1 {
        return Ok(config.lr_start);
    }
    if epoch + 1 == config.epochs {
        return Ok(config.lr_end);
    }
    let frac = epoch as f64 / (config.epochs - 1) as f64;
    Ok(config.lr_start * (config.lr_end / config.lr_start).powf(frac))
}
