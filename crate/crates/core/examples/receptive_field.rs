//! Receptive field of the residual network, by formula and by perturbing a
//! single input pixel.

use turbulence_restore::network::{init_model, receptive_field, Model, NetworkConfig};
use turbulence_restore::tensor::Tensor;

fn footprint(depth: usize, kernel: usize) -> usize {
    let cfg = NetworkConfig {
        depth,
        kernel,
        width: 4,
        in_channels: 1,
        out_channels: 1,
    };
    let mut model: Model<f64> = init_model(cfg, 3).unwrap();
    // Positive weights and an identity-like norm so no path cancels out.
    for l in &mut model.layers {
        l.conv.weights = l.conv.weights.map(|w| w.abs() + 0.01);
        if let Some(n) = &mut l.norm {
            n.state.running_mean = vec![0.0; n.state.channels()];
        }
    }
    let side = 2 * receptive_field(depth, kernel) + 1;
    let c = side / 2;
    let base = Tensor::filled(&[1, 1, side, side], 0.5);
    let mut poked = base.clone();
    poked.data_mut()[c * side + c] += 1.0;
    let (r0, r1) = (model.infer_residual(&base).unwrap(), model.infer_residual(&poked).unwrap());
    let row: Vec<bool> = (0..side).map(|x| r0.data()[c * side + x] != r1.data()[c * side + x]).collect();
    row.iter().filter(|&&b| b).count()
}

fn main() {
    println!("paper-scale (d=17, n=5): {0}x{0}", receptive_field(17, 5));
    println!("desk (d=7, n=5): {0}x{0}", receptive_field(7, 5));
    for (d, n) in [(3, 3), (4, 5), (5, 3)] {
        println!("d={d} n={n}: formula {} measured {}", receptive_field(d, n), footprint(d, n));
    }
}
