//! Per-channel batch normalization over the `(N, H, W)` axes of an NCHW map.

use super::{Real, Result, Tensor, TensorError};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic: `running = m * running + (1 - m) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Running statistics used in inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::from_f64(BN_MOMENTUM),
            eps: T::from_f64(BN_EPSILON),
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }
}

/// Saved activations of a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
    gamma: Vec<T>,
}

fn check_params<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    channels: usize,
) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = x.dims4()?;
    for (what, t) in [("batchnorm gamma", gamma), ("batchnorm beta", beta)] {
        if t.len() != c {
            return Err(TensorError::Dimension {
                what,
                dim: "channels",
                expected: c,
                found: t.len(),
            });
        }
    }
    if channels != c {
        return Err(TensorError::Dimension {
            what: "batchnorm running statistics",
            dim: "channels",
            expected: c,
            found: channels,
        });
    }
    Ok((n, c, h * w))
}

/// Train-mode forward: standardizes each channel with the batch statistics,
/// applies `gamma`/`beta`, and folds the batch statistics into `state`.
pub fn batchnorm_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &mut BatchNormState<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (n, c, hw) = check_params(x, gamma, beta, state.channels())?;
    let count = n * hw;
    if count < 2 {
        return Err(TensorError::Invalid(format!(
            "batchnorm in train mode needs N*H*W >= 2 samples per channel, got {count}"
        )));
    }
    let xd = x.data();
    let eps = state.eps.as_f64();
    let momentum = state.momentum.as_f64();
    let mut out = Tensor::zeros(x.shape());
    let mut x_hat = Tensor::zeros(x.shape());
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let planes = || (0..n).map(move |s| (s * c + ch) * hw);
        let mut sum = 0.0;
        for p in planes() {
            sum += xd[p..p + hw].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = sum / count as f64;
        let mut sq = 0.0;
        for p in planes() {
            sq += xd[p..p + hw]
                .iter()
                .map(|v| {
                    let d = v.as_f64() - mean;
                    d * d
                })
                .sum::<f64>();
        }
        let var = sq / count as f64;
        let istd = 1.0 / (var + eps).sqrt();
        let (g, b) = (gamma.data()[ch].as_f64(), beta.data()[ch].as_f64());
        for p in planes() {
            for i in p..p + hw {
                let xh = (xd[i].as_f64() - mean) * istd;
                x_hat.data_mut()[i] = T::from_f64(xh);
                out.data_mut()[i] = T::from_f64(g * xh + b);
            }
        }
        inv_std.push(T::from_f64(istd));
        let unbiased = sq / (count - 1) as f64;
        let rm = &mut state.running_mean[ch];
        *rm = T::from_f64(momentum * rm.as_f64() + (1.0 - momentum) * mean);
        let rv = &mut state.running_var[ch];
        *rv = T::from_f64(momentum * rv.as_f64() + (1.0 - momentum) * unbiased);
    }
    let cache = BatchNormCache {
        x_hat,
        inv_std,
        gamma: gamma.data().to_vec(),
    };
    Ok((out, cache))
}

/// Inference-mode forward using only the running statistics.
pub fn batchnorm_infer<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &BatchNormState<T>,
) -> Result<Tensor<T>> {
    let (n, c, hw) = check_params(x, gamma, beta, state.channels())?;
    let mut out = x.clone();
    let od = out.data_mut();
    for ch in 0..c {
        let scale = gamma.data()[ch] / (state.running_var[ch] + state.eps).sqrt();
        let shift = beta.data()[ch] - state.running_mean[ch] * scale;
        for s in 0..n {
            let p = (s * c + ch) * hw;
            for v in &mut od[p..p + hw] {
                *v = *v * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_gamma, grad_beta)` for a train-mode forward pass.
pub fn batchnorm_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    cache.x_hat.expect_same_shape(grad_out, "batchnorm grad_out")?;
    let (n, c, h, w) = grad_out.dims4()?;
    let hw = h * w;
    let count = (n * hw) as f64;
    let g = grad_out.data();
    let xh = cache.x_hat.data();
    let mut grad_x = Tensor::zeros(grad_out.shape());
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let planes = || (0..n).map(move |s| (s * c + ch) * hw);
        let (mut sum_g, mut sum_gx) = (0.0f64, 0.0f64);
        for p in planes() {
            for i in p..p + hw {
                let gv = g[i].as_f64();
                sum_g += gv;
                sum_gx += gv * xh[i].as_f64();
            }
        }
        grad_beta.data_mut()[ch] = T::from_f64(sum_g);
        grad_gamma.data_mut()[ch] = T::from_f64(sum_gx);
        let k = cache.gamma[ch].as_f64() * cache.inv_std[ch].as_f64() / count;
        for p in planes() {
            for i in p..p + hw {
                let v = k * (count * g[i].as_f64() - sum_g - xh[i].as_f64() * sum_gx);
                grad_x.data_mut()[i] = T::from_f64(v);
            }
        }
    }
    Ok((grad_x, grad_gamma, grad_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    fn channel_stats(t: &Tensor<f64>, ch: usize) -> (f64, f64) {
        let (n, c, h, w) = t.dims4().unwrap();
        let vals: Vec<f64> = (0..n)
            .flat_map(|s| t.data()[(s * c + ch) * h * w..(s * c + ch + 1) * h * w].to_vec())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        (mean, var)
    }

    #[test]
    fn train_mode_standardizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random(&[3, 2, 4, 5], &mut rng, -3.0, 7.0);
        let mut st = BatchNormState::new(2);
        let (y, _) = batchnorm_forward(&x, &Tensor::filled(&[2], 1.0), &Tensor::zeros(&[2]), &mut st)
            .unwrap();
        for ch in 0..2 {
            let (m, v) = channel_stats(&y, ch);
            assert!(m.abs() <= 1e-6);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::filled(&[2, 1, 3, 3], 0.42f64);
        let mut st = BatchNormState::new(1);
        let (y, _) = batchnorm_forward(&x, &Tensor::filled(&[1], 1.0), &Tensor::filled(&[1], 5.0), &mut st)
            .unwrap();
        assert!(y.data().iter().all(|&v| (v - 5.0).abs() < 1e-9));
    }

    #[test]
    fn running_statistics_follow_momentum() {
        let x = Tensor::from_vec(&[1, 1, 1, 4], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let mut st = BatchNormState::new(1);
        batchnorm_forward(&x, &Tensor::filled(&[1], 1.0), &Tensor::zeros(&[1]), &mut st).unwrap();
        assert!((st.running_mean[0] - 0.1 * 2.5).abs() < 1e-12);
        // unbiased batch variance of 1..4 is 5/3
        assert!((st.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn infer_mode_uses_running_statistics_only() {
        let mut st = BatchNormState::<f64>::new(1);
        st.running_mean[0] = 2.0;
        st.running_var[0] = 4.0 - st.eps;
        let x = Tensor::from_vec(&[1, 1, 1, 2], vec![2.0, 6.0]).unwrap();
        let y = batchnorm_infer(&x, &Tensor::filled(&[1], 3.0), &Tensor::filled(&[1], 1.0), &st).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn train_mode_rejects_single_sample() {
        let x = Tensor::filled(&[1, 1, 1, 1], 1.0f64);
        let mut st = BatchNormState::new(1);
        assert!(batchnorm_forward(&x, &Tensor::filled(&[1], 1.0), &Tensor::zeros(&[1]), &mut st).is_err());
    }

    #[test]
    fn trivial_backward_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = random(&[2, 3, 3, 3], &mut rng, -1.0, 1.0);
        let gamma = random(&[3], &mut rng, 0.5, 1.5);
        let beta = random(&[3], &mut rng, -0.5, 0.5);
        let mut st = BatchNormState::new(3);
        let (_, cache) = batchnorm_forward(&x, &gamma, &beta, &mut st).unwrap();

        let (gx, gg, gb) = batchnorm_backward(&Tensor::zeros(x.shape()), &cache).unwrap();
        assert!(gx.data().iter().chain(gg.data()).chain(gb.data()).all(|&v| v == 0.0));

        let go = random(x.shape(), &mut rng, -1.0, 1.0);
        let (_, _, gb) = batchnorm_backward(&go, &cache).unwrap();
        for ch in 0..3 {
            let s: f64 = (0..2)
                .flat_map(|n| go.data()[(n * 3 + ch) * 9..(n * 3 + ch + 1) * 9].to_vec())
                .sum();
            assert!((gb.data()[ch] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = random(&[2, 2, 3, 4], &mut rng, -1.0, 1.0);
        let gamma = random(&[2], &mut rng, 0.5, 1.5);
        let beta = random(&[2], &mut rng, -0.5, 0.5);
        let go = random(x.shape(), &mut rng, -1.0, 1.0);
        let objective = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            let mut st = BatchNormState::new(2);
            let (y, _) = batchnorm_forward(x, g, b, &mut st).unwrap();
            y.data().iter().zip(go.data()).map(|(a, b)| a * b).sum()
        };
        let mut st = BatchNormState::new(2);
        let (_, cache) = batchnorm_forward(&x, &gamma, &beta, &mut st).unwrap();
        let (gx, gg, gb) = batchnorm_backward(&go, &cache).unwrap();
        let h = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
        for i in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data_mut()[i] += h;
            m.data_mut()[i] -= h;
            let fd = (objective(&p, &gamma, &beta) - objective(&m, &gamma, &beta)) / (2.0 * h);
            assert!(rel(gx.data()[i], fd) < 1e-5, "x[{i}] {} vs {fd}", gx.data()[i]);
        }
        for ch in 0..2 {
            let (mut p, mut m) = (gamma.clone(), gamma.clone());
            p.data_mut()[ch] += h;
            m.data_mut()[ch] -= h;
            let fd = (objective(&x, &p, &beta) - objective(&x, &m, &beta)) / (2.0 * h);
            assert!(rel(gg.data()[ch], fd) < 1e-5);
            let (mut p, mut m) = (beta.clone(), beta.clone());
            p.data_mut()[ch] += h;
            m.data_mut()[ch] -= h;
            let fd = (objective(&x, &gamma, &p) - objective(&x, &gamma, &m)) / (2.0 * h);
            assert!(rel(gb.data()[ch], fd) < 1e-5);
        }
    }
}
