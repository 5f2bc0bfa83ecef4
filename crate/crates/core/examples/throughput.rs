//! Inference speed of the full-size model on a 512x256 frame.

use std::time::Instant;

use turbulence_restore::io::Throughput;
use turbulence_restore::network::{init_model, NetworkConfig};
use turbulence_restore::tensor::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = init_model::<f32>(NetworkConfig::paper(1), 1)?;
    let frame = Tensor::filled(&[1, 1, 256, 512], 0.5f32);
    model.restore(&frame)?;
    let runs = 3;
    let start = Instant::now();
    for _ in 0..runs {
        model.restore(&frame)?;
    }
    let tp = Throughput::new(runs, (runs * 512 * 256) as u64, start.elapsed().as_secs_f64());
    println!(
        "{} threads: {:.0} pixels/s ({:.3} s per frame)",
        rayon::current_num_threads(),
        tp.pixels_per_second,
        tp.seconds / runs as f64
    );
    Ok(())
}
