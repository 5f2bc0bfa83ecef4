//! End-to-end file workflow: simulate a scene to disk, train briefly,
//! restore with a 3-frame sliding window and score the output.

use turbulence_restore::io::write_image;
use turbulence_restore::scenes::shapes;
use turbulence_restore::training::Preset;
use turbulence_restore::workflow::{
    evaluate, restore, simulate, train_model, EvaluateOptions, RestoreOptions, SimulateOptions, TrainOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let clean_dir = root.path().join("clean");
    std::fs::create_dir_all(&clean_dir)?;
    write_image(&shapes(96), clean_dir.join("shapes.pgm"))?;

    let data = root.path().join("data");
    simulate(&SimulateOptions {
        clean: clean_dir,
        out: data.clone(),
        frames: 6,
        config: None,
        seed: 3,
    })?;

    let model = root.path().join("model.atrm");
    train_model(&TrainOptions {
        data: data.clone(),
        preset: Preset::Desk,
        out: model.clone(),
        in_frames: 1,
        avg_window: 3,
        seed: 4,
        epochs: Some(2),
        resume: None,
    })?;

    let restored = root.path().join("restored");
    let manifest = restore(&RestoreOptions {
        model,
        input: data.join("shapes"),
        out: restored.clone(),
        avg_window: 3,
        report: true,
    })?;
    println!("restored {} frames", manifest.outputs.len());

    let report = evaluate(&EvaluateOptions {
        restored,
        clean: data.join("shapes").join("clean.pgm"),
        out: root.path().join("report.csv"),
    })?;
    report.write_csv(std::io::stdout())?;
    Ok(())
}
