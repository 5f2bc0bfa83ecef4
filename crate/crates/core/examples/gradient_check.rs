//! Compares backpropagated gradients of the residual loss with central
//! finite differences on a tiny double-precision model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turbulence_restore::network::{init_model, Model, NetworkConfig};
use turbulence_restore::tensor::Tensor;
use turbulence_restore::training::residual_loss;

fn loss(model: &Model<f64>, y: &Tensor<f64>, x: &Tensor<f64>) -> f64 {
    let (r, _) = model.clone().forward_train(y).unwrap();
    residual_loss(&r, y, x).unwrap().0
}

fn main() {
    let cfg = NetworkConfig {
        depth: 3,
        kernel: 3,
        width: 2,
        in_channels: 1,
        out_channels: 1,
    };
    let mut model: Model<f64> = init_model(cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rand = |n| (0..n).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
    let y = Tensor::from_vec(&[2, 1, 8, 8], rand(128)).unwrap();
    let x = Tensor::from_vec(&[2, 1, 8, 8], rand(128)).unwrap();

    let (r, cache) = model.clone().forward_train(&y).unwrap();
    let (_, g) = residual_loss(&r, &y, &x).unwrap();
    let grads = model.backward(cache, &g).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let h = 1e-4;
    let mut worst = 0.0f64;
    for (group, a) in analytic.iter().enumerate() {
        for i in 0..a.len() {
            let base = model.trainable_mut()[group][i];
            model.trainable_mut()[group][i] = base + h;
            let up = loss(&model, &y, &x);
            model.trainable_mut()[group][i] = base - h;
            let down = loss(&model, &y, &x);
            model.trainable_mut()[group][i] = base;
            let numeric = (up - down) / (2.0 * h);
            let rel = (a[i] - numeric).abs() / a[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let count: usize = analytic.iter().map(Vec::len).sum();
    println!("{count} parameters, worst relative error {worst:.2e}");
}
