//! Sliding-window averaging: longer windows trade temporal detail for less
//! geometric jitter.

use turbulence_restore::metrics::psnr;
use turbulence_restore::scenes::chessboard;
use turbulence_restore::sim::{frame_average, simulate_sequence, DistortionConfig, TemporalInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clean = chessboard(128);
    let seq = simulate_sequence(&clean, 20, &DistortionConfig::default())?;
    let single: f64 = seq.frames().iter().map(|f| psnr(f, &clean, 1.0).unwrap()).sum::<f64>() / 20.0;
    println!("mean single frame: {single:.2} dB");
    for window in [2, 5, 10, 20] {
        let avg = frame_average(&seq, window, 19)?;
        println!("window {window:>2}: {:.2} dB", psnr(&avg, &clean, 1.0)?);
    }
    let mode = TemporalInput::new(3, 5)?;
    let stacked = mode.input_at(&seq, 19)?;
    println!(
        "3-frame input at t=19: {} channels, valid from t={}",
        stacked.channels(),
        mode.first_valid()
    );
    Ok(())
}
