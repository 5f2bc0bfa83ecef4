//! Distorts a bundled scene and writes the clean frame plus eight distorted
//! frames as PGM files.
//!
//! `cargo run --example simulate_turbulence -- [out_dir]`

use std::path::PathBuf;

use turbulence_restore::io::write_scene;
use turbulence_restore::metrics::evaluate;
use turbulence_restore::scenes::bricks;
use turbulence_restore::sim::{simulate_sequence, DistortionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sim_out/bricks".into()));
    let clean = bricks(128);
    let config = DistortionConfig {
        seed: 7,
        ..DistortionConfig::default()
    };
    let seq = simulate_sequence(&clean, 8, &config)?;
    for (t, f) in seq.frames().iter().enumerate() {
        let q = evaluate(f, &clean)?;
        println!("frame {t}: {:.2} dB, SSIM {:.4}", q.psnr_db, q.ssim);
    }
    let written = write_scene(&out, &clean, &seq)?;
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}
