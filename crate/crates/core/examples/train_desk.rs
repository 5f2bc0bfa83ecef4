//! Trains a small desk-scale model on a simulated scene and checks the
//! restoration on frames simulated with a different seed.
//!
//! `cargo run --release --example train_desk -- [epochs]`

use turbulence_restore::image::ImageFrame;
use turbulence_restore::metrics::evaluate;
use turbulence_restore::network::{init_model, NetworkConfig};
use turbulence_restore::scenes::chessboard;
use turbulence_restore::sim::{simulate_sequence, DistortionConfig, TemporalInput};
use turbulence_restore::training::{build_pairs, train, AdamState, TrainingConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let clean = chessboard(128);
    let seq = simulate_sequence(&clean, 8, &DistortionConfig { seed: 1, ..Default::default() })?;
    let pairs = build_pairs(&clean, &seq, &TemporalInput::single())?;

    let mut model = init_model::<f32>(NetworkConfig::desk(1), 7)?;
    let mut opt = AdamState::new(&model.trainable_lens());
    let config = TrainingConfig {
        epochs,
        ..TrainingConfig::desk()
    };
    let log = train(&mut model, &mut opt, &pairs, &config)?;
    let per_epoch = log.len() / epochs;
    for chunk in log.chunks(per_epoch) {
        let mean = chunk.iter().map(|r| r.loss).sum::<f64>() / chunk.len() as f64;
        println!("epoch {:>3} lr {:.2e} loss {mean:.4}", chunk[0].epoch, chunk[0].lr);
    }

    let test = simulate_sequence(&clean, 1, &DistortionConfig { seed: 99, ..Default::default() })?;
    let y = &test.frames()[0];
    let restored = ImageFrame::from_tensor(&model.restore(&y.to_tensor())?, 0)?;
    let (before, after) = (evaluate(y, &clean)?, evaluate(&restored, &clean)?);
    println!("held out: {:.2} dB -> {:.2} dB", before.psnr_db, after.psnr_db);
    Ok(())
}
