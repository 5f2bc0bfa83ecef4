//! Scores a simulated sequence and its 5-frame average against the clean
//! scene and prints the CSV report.

use turbulence_restore::metrics::{evaluate, evaluate_scene, SceneReport};
use turbulence_restore::scenes::bricks;
use turbulence_restore::sim::{frame_average, simulate_sequence, DistortionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clean = bricks(128);
    let seq = simulate_sequence(&clean, 5, &DistortionConfig::default())?;
    let report = evaluate_scene(seq.frames(), &clean)?;
    report.write_csv(std::io::stdout())?;

    let avg = frame_average(&seq, 5, 4)?;
    let single = SceneReport::from_reports(vec!["average".into()], vec![evaluate(&avg, &clean)?])?;
    single.write_csv(std::io::stdout())?;
    Ok(())
}
