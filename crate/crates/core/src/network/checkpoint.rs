//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! b"ATRM"                      magic
//! u16                          format version (1)
//! u32 x 5                      depth, kernel, width, in_channels, out_channels
//! u8                           1 if optimizer state follows, else 0
//! per layer, in network order:
//!   f32[C_out*C_in*n*n]        conv weights, [C_out, C_in, n, n] row-major
//!   f32[C_out]                 conv bias
//!   hidden layers only:
//!   f32[C_out] x 4             gamma, beta, running mean, running variance
//! if optimizer state present:
//!   f32[..]                    Adam first moments, one array per trainable
//!                              group (weights, bias, gamma, beta per layer)
//!   f32[..]                    Adam second moments, same groups and order
//!   u64                        optimizer step counter
//! ```
//!
//! Nothing may follow the last field.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{init_model, Model, NetworkConfig};
use crate::training::AdamState;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ATRM";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:?}, not a model checkpoint")]
    BadMagic([u8; 4]),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("checkpoint truncated: needed {needed} more bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint holds an invalid network config: {0}")]
    InvalidConfig(String),
    #[error("optimizer state does not mirror the model parameters")]
    OptimizerMismatch,
}

/// A model together with the optimizer state needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub optimizer: Option<AdamState<f32>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s_into(&mut self, dst: &mut [f32]) -> Result<(), CheckpointError> {
        let raw = self.take(dst.len() * 4)?;
        for (d, c) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *d = f32::from_le_bytes(c.try_into().unwrap());
        }
        Ok(())
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(model: &Model<f32>, optimizer: Option<&AdamState<f32>>) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(64 + cfg.parameter_count() * 4);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [cfg.depth, cfg.kernel, cfg.width, cfg.in_channels, cfg.out_channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(optimizer.is_some() as u8);
    for layer in &model.layers {
        put_f32s(&mut out, layer.conv.weights.data());
        put_f32s(&mut out, layer.conv.bias.data());
        if let Some(n) = &layer.norm {
            put_f32s(&mut out, n.gamma.data());
            put_f32s(&mut out, n.beta.data());
            put_f32s(&mut out, &n.state.running_mean);
            put_f32s(&mut out, &n.state.running_var);
        }
    }
    if let Some(opt) = optimizer {
        for group in opt.m.iter().chain(&opt.v) {
            put_f32s(&mut out, group);
        }
        out.extend_from_slice(&opt.step.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let config = NetworkConfig {
        depth: dims[0],
        kernel: dims[1],
        width: dims[2],
        in_channels: dims[3],
        out_channels: dims[4],
    };
    config
        .validate()
        .map_err(|e| CheckpointError::InvalidConfig(e.to_string()))?;
    // Refuse absurd headers before allocating for them.
    let needed = config.parameter_count() * 4;
    let available = bytes.len() - r.pos;
    if needed > available {
        return Err(CheckpointError::Truncated {
            offset: r.pos,
            needed,
            available,
        });
    }
    let has_optimizer = match r.u8()? {
        0 => false,
        1 => true,
        other => {
            return Err(CheckpointError::InvalidConfig(format!(
                "optimizer flag must be 0 or 1, got {other}"
            )))
        }
    };

    let mut model: Model<f32> =
        init_model(config, 0).map_err(|e| CheckpointError::InvalidConfig(e.to_string()))?;
    for layer in &mut model.layers {
        r.f32s_into(layer.conv.weights.data_mut())?;
        r.f32s_into(layer.conv.bias.data_mut())?;
        if let Some(n) = &mut layer.norm {
            r.f32s_into(n.gamma.data_mut())?;
            r.f32s_into(n.beta.data_mut())?;
            r.f32s_into(&mut n.state.running_mean)?;
            r.f32s_into(&mut n.state.running_var)?;
        }
    }
    let optimizer = if has_optimizer {
        let mut opt = AdamState::new(&model.trainable_lens());
        for group in opt.m.iter_mut().chain(opt.v.iter_mut()) {
            r.f32s_into(group)?;
        }
        opt.step = r.u64()?;
        Some(opt)
    } else {
        None
    };
    let trailing = bytes.len() - r.pos;
    if trailing != 0 {
        return Err(CheckpointError::TrailingBytes(trailing));
    }
    Ok(Checkpoint { model, optimizer })
}

pub fn save_checkpoint(
    model: &Model<f32>,
    optimizer: Option<&AdamState<f32>>,
    path: impl AsRef<Path>,
) -> Result<(), CheckpointError> {
    if let Some(opt) = optimizer {
        if opt.lens() != model.trainable_lens() {
            return Err(CheckpointError::OptimizerMismatch);
        }
    }
    fs::write(path, encode_checkpoint(model, optimizer))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    decode_checkpoint(&fs::read(path)?)
}
