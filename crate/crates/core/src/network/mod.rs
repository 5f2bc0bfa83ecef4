//! The residual restoration network.
//!
//! A plain stack of `depth` same-padded `kernel x kernel` convolutions:
//!
//! * layer 1: `in_channels -> width`, followed by ReLU;
//! * layers 2..depth-1: `width -> width`, batch normalization, ReLU;
//! * layer `depth`: `width -> out_channels`, no activation.
//!
//! The output is the deformation map `R(y)`, an estimate of `y - x`; the
//! restored frame is `y - R(y)`.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, conv2d_forward, relu_backward,
    relu_inplace, BatchNormCache, BatchNormState, ConvSpec, Real, Tensor, TensorError,
};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("model expects {expected} input channels, got {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub depth: usize,
    pub kernel: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl NetworkConfig {
    /// 17 layers of 5x5 filters, 64 feature maps.
    pub fn paper(in_channels: usize) -> Self {
        NetworkConfig {
            depth: 17,
            kernel: 5,
            width: 64,
            in_channels,
            out_channels: in_channels,
        }
    }

    /// 7 layers of 5x5 filters, 16 feature maps.
    pub fn desk(in_channels: usize) -> Self {
        NetworkConfig {
            depth: 7,
            kernel: 5,
            width: 16,
            in_channels,
            out_channels: in_channels,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: String| Err(NetworkError::InvalidConfig(m));
        if self.depth < 3 {
            return bad(format!("depth must be at least 3, got {}", self.depth));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return bad(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.width == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return bad("width and channel counts must be positive".into());
        }
        if self.out_channels != self.in_channels {
            return bad(format!(
                "residual subtraction needs out_channels == in_channels ({} != {})",
                self.out_channels, self.in_channels
            ));
        }
        Ok(())
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.depth, self.kernel)
    }

    fn layer_specs(&self) -> Vec<ConvSpec> {
        (0..self.depth)
            .map(|i| {
                let cin = if i == 0 { self.in_channels } else { self.width };
                let cout = if i + 1 == self.depth { self.out_channels } else { self.width };
                ConvSpec {
                    in_channels: cin,
                    out_channels: cout,
                    kernel: self.kernel,
                }
            })
            .collect()
    }

    /// Every stored float: conv weights and biases, plus gamma, beta and both
    /// running statistics of each hidden layer.
    pub fn parameter_count(&self) -> usize {
        self.layer_specs()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let conv = s.out_channels * s.patch_len() + s.out_channels;
                if self.is_hidden(i) {
                    conv + 4 * s.out_channels
                } else {
                    conv
                }
            })
            .sum()
    }

    /// Parameters updated by the optimizer (running statistics excluded).
    pub fn trainable_parameter_count(&self) -> usize {
        self.parameter_count() - 2 * self.width * (self.depth - 2)
    }

    fn is_hidden(&self, layer: usize) -> bool {
        layer > 0 && layer + 1 < self.depth
    }
}

/// Side length of the input window that influences one output pixel of a
/// stride-1 stack of `depth` convolutions with `kernel x kernel` filters.
pub fn receptive_field(depth: usize, kernel: usize) -> usize {
    depth * (kernel.saturating_sub(1)) + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; running statistics are updated.
    Train,
    /// Running statistics only; deterministic per sample.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub spec: ConvSpec,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub state: BatchNormState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub conv: ConvLayer<T>,
    pub norm: Option<BatchNormLayer<T>>,
    pub relu: bool,
}

/// All trainable parameters plus the architecture that gives them meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: NetworkConfig,
    pub layers: Vec<Layer<T>>,
}

/// Activations saved by a train-mode forward pass.
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
}

struct LayerCache<T> {
    input: Tensor<T>,
    norm: Option<BatchNormCache<T>>,
    pre_relu: Option<Tensor<T>>,
}

/// Gradient of a scalar loss with respect to every trainable parameter.
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub gamma: Option<Tensor<T>>,
    pub beta: Option<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Real> Gradients<T> {
    /// Flat views in optimizer order: per layer weights, bias, gamma, beta.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weights.data());
            out.push(l.bias.data());
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.data());
                out.push(b.data());
            }
        }
        out
    }
}

/// He-initialized model: conv weights `~ N(0, 2 / (n * n * fan_in))`, zero
/// biases, unit gamma, zero beta. Deterministic for a given seed.
pub fn init_model<T: Real>(config: NetworkConfig, seed: u64) -> Result<Model<T>, NetworkError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = config
        .layer_specs()
        .into_iter()
        .enumerate()
        .map(|(i, spec)| {
            let fan_in = spec.patch_len() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
            let weights = (0..spec.out_channels * spec.patch_len())
                .map(|_| T::from_f64(normal.sample(&mut rng)))
                .collect();
            let hidden = config.is_hidden(i);
            Layer {
                conv: ConvLayer {
                    spec,
                    weights: Tensor::from_vec(&spec.weight_shape(), weights)
                        .expect("weight shape"),
                    bias: Tensor::zeros(&[spec.out_channels]),
                },
                norm: hidden.then(|| BatchNormLayer {
                    gamma: Tensor::filled(&[spec.out_channels], T::one()),
                    beta: Tensor::zeros(&[spec.out_channels]),
                    state: BatchNormState::new(spec.out_channels),
                }),
                relu: i + 1 < config.depth,
            }
        })
        .collect();
    Ok(Model { config, layers })
}

impl<T: Real> Model<T> {
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    conv: ConvLayer {
                        spec: l.conv.spec,
                        weights: l.conv.weights.cast(),
                        bias: l.conv.bias.cast(),
                    },
                    norm: l.norm.as_ref().map(|n| BatchNormLayer {
                        gamma: n.gamma.cast(),
                        beta: n.beta.cast(),
                        state: BatchNormState {
                            running_mean: n.state.running_mean.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                            running_var: n.state.running_var.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                            momentum: U::from_f64(n.state.momentum.as_f64()),
                            eps: U::from_f64(n.state.eps.as_f64()),
                        },
                    }),
                    relu: l.relu,
                })
                .collect(),
        }
    }

    /// Trainable parameters in optimizer order: per layer weights, bias,
    /// gamma, beta.
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.conv.weights.data_mut());
            out.push(l.conv.bias.data_mut());
            if let Some(n) = &mut l.norm {
                out.push(n.gamma.data_mut());
                out.push(n.beta.data_mut());
            }
        }
        out
    }

    pub fn trainable_lens(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.conv.weights.len());
            out.push(l.conv.bias.len());
            if let Some(n) = &l.norm {
                out.push(n.gamma.len());
                out.push(n.beta.len());
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.conv.weights.len()
                    + l.conv.bias.len()
                    + l.norm.as_ref().map_or(0, |n| {
                        n.gamma.len() + n.beta.len() + n.state.running_mean.len() + n.state.running_var.len()
                    })
            })
            .sum()
    }

    fn check_input(&self, y: &Tensor<T>) -> Result<(), NetworkError> {
        let (_, c, _, _) = y.dims4()?;
        if c != self.config.in_channels {
            return Err(NetworkError::ChannelMismatch {
                expected: self.config.in_channels,
                found: c,
            });
        }
        Ok(())
    }

    /// Deformation map `R(y)` in the requested mode. Train mode updates the
    /// batch-norm running statistics.
    pub fn forward_residual(&mut self, y: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NetworkError> {
        match mode {
            Mode::Infer => self.infer_residual(y),
            Mode::Train => self.forward_train(y).map(|(r, _)| r),
        }
    }

    /// Inference-mode deformation map. Each sample is processed
    /// independently of the rest of the batch.
    pub fn infer_residual(&self, y: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        self.check_input(y)?;
        let mut act = None::<Tensor<T>>;
        for layer in &self.layers {
            let input = act.as_ref().unwrap_or(y);
            let mut z = conv2d_forward(input, &layer.conv.weights, &layer.conv.bias, &layer.conv.spec)?;
            if let Some(n) = &layer.norm {
                z = batchnorm_infer(&z, &n.gamma, &n.beta, &n.state)?;
            }
            if layer.relu {
                relu_inplace(&mut z);
            }
            act = Some(z);
        }
        Ok(act.expect("depth >= 3"))
    }

    /// Restored frame `y - R(y)` (inference mode, no clamping).
    pub fn restore(&self, y: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        let r = self.infer_residual(y)?;
        Ok(y.sub(&r)?)
    }

    /// Train-mode forward pass that keeps what [`Model::backward`] needs.
    pub fn forward_train(&mut self, y: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>), NetworkError> {
        self.check_input(y)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut act = y.clone();
        for layer in &mut self.layers {
            let z = conv2d_forward(&act, &layer.conv.weights, &layer.conv.bias, &layer.conv.spec)?;
            let (mut z, norm) = match &mut layer.norm {
                Some(n) => {
                    let (out, cache) = batchnorm_forward(&z, &n.gamma, &n.beta, &mut n.state)?;
                    (out, Some(cache))
                }
                None => (z, None),
            };
            let pre_relu = layer.relu.then(|| z.clone());
            if layer.relu {
                relu_inplace(&mut z);
            }
            caches.push(LayerCache {
                input: std::mem::replace(&mut act, z),
                norm,
                pre_relu,
            });
        }
        Ok((act, ForwardCache { layers: caches }))
    }

    /// Backpropagates `grad_residual` (dL/dR) through a cached forward pass.
    pub fn backward(&self, cache: ForwardCache<T>, grad_residual: &Tensor<T>) -> Result<Gradients<T>, NetworkError> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_residual.clone();
        for (i, (layer, lc)) in self.layers.iter().zip(cache.layers).enumerate().rev() {
            if let Some(pre) = &lc.pre_relu {
                g = relu_backward(&g, pre)?;
            }
            let (gamma, beta) = match &lc.norm {
                Some(bn) => {
                    let (gx, gg, gb) = batchnorm_backward(&g, bn)?;
                    g = gx;
                    (Some(gg), Some(gb))
                }
                None => (None, None),
            };
            let cg = crate::tensor::conv::conv2d_backward_ext(
                &g,
                &lc.input,
                &layer.conv.weights,
                &layer.conv.spec,
                i > 0,
            )?;
            grads.push(LayerGrads {
                weights: cg.weights,
                bias: cg.bias,
                gamma,
                beta,
            });
            if let Some(gi) = cg.input {
                g = gi;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}
