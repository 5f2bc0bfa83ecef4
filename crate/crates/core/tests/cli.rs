use std::path::Path;
use std::process::{Command, Output};

use turbulence_restore::io::{read_image, write_image};
use turbulence_restore::network::{init_model, save_checkpoint, NetworkConfig};
use turbulence_restore::scenes::chessboard;
use turbulence_restore::training::AdamState;

fn atrm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atrm"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn setup() -> tempfile::TempDir {
    let root = tempfile::tempdir().unwrap();
    std::fs::create_dir(root.path().join("clean")).unwrap();
    write_image(&chessboard(96), root.path().join("clean/board.pgm")).unwrap();
    root
}

#[test]
fn full_workflow() {
    let root = setup();
    let dir = root.path();
    let o = atrm(&["simulate", "--clean", "clean", "--out", "data", "--frames", "5", "--seed", "2"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("data/board/clean.pgm").exists());
    assert!(dir.join("data/board/distorted_0005.pgm").exists());
    assert!(dir.join("data/manifest.json").exists());

    let o = atrm(&["train", "--data", "data", "--out", "m.atrm", "--epochs", "1", "--in-frames", "3", "--avg-window", "2"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.join("m.atrm.loss.csv")).unwrap();
    assert!(csv.starts_with("epoch,step,lr,loss\n"));
    assert!(dir.join("m.atrm.manifest.json").exists());

    let o = atrm(&["train", "--data", "data", "--out", "m2.atrm", "--epochs", "2", "--in-frames", "3", "--avg-window", "2", "--resume", "m.atrm"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first_steps = csv.lines().count() - 1;
    let resumed = std::fs::read_to_string(dir.join("m2.atrm.loss.csv")).unwrap();
    let step = resumed.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert_eq!(step.parse::<usize>().unwrap(), first_steps + 1);

    let o = atrm(&["restore", "--model", "m.atrm", "--in", "data/board", "--out", "out", "--avg-window", "2", "--report"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // Frames are numbered from 1; three stacked windows of two frames need
    // four frames of history, so the first output is frame 4.
    assert!(!dir.join("out/restored_0003.pgm").exists());
    let r = read_image(dir.join("out/restored_0004.pgm")).unwrap();
    assert_eq!(r.dims(), (96, 96, 1));
    assert!(dir.join("out/restored_0005.pgm").exists());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("out/manifest.json")).unwrap()).unwrap();
    assert!(manifest["throughput"]["pixels_per_second"].as_f64().unwrap() > 0.0);

    let o = atrm(&["evaluate", "--restored", "out", "--clean", "data/board/clean.pgm", "--out", "report.csv"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(report.starts_with("frame,psnr_db,ssim,mse\n"));
    assert_eq!(report.lines().count(), 4);
    assert!(report.lines().last().unwrap().starts_with("mean,"));
}

#[test]
fn usage_errors_exit_1() {
    let root = setup();
    assert_eq!(code(&atrm(&[], root.path())), 1);
    assert_eq!(code(&atrm(&["frobnicate"], root.path())), 1);
    assert_eq!(code(&atrm(&["train", "--data", "x", "--out", "y", "--in-frames", "2"], root.path())), 1);
    assert_eq!(code(&atrm(&["simulate", "--clean", "clean", "--out", "d", "--frames", "0"], root.path())), 1);
    assert_eq!(code(&atrm(&["--help"], root.path())), 0);
}

#[test]
fn data_errors_exit_2() {
    let root = setup();
    let dir = root.path();
    assert_eq!(code(&atrm(&["simulate", "--clean", "missing", "--out", "d"], dir)), 2);
    std::fs::write(dir.join("clean/broken.pgm"), b"P5\n4 4\n255\n\x00").unwrap();
    assert_eq!(code(&atrm(&["simulate", "--clean", "clean", "--out", "d"], dir)), 2);
    std::fs::remove_file(dir.join("clean/broken.pgm")).unwrap();

    assert_eq!(code(&atrm(&["simulate", "--clean", "clean", "--out", "two", "--frames", "2"], dir)), 0);
    // Three-frame input needs at least three frames.
    assert_eq!(code(&atrm(&["train", "--data", "two", "--out", "m", "--in-frames", "3", "--epochs", "1"], dir)), 2);
    std::fs::write(dir.join("bad.atrm"), b"not a checkpoint").unwrap();
    assert_eq!(code(&atrm(&["restore", "--model", "bad.atrm", "--in", "two/board", "--out", "o"], dir)), 2);
}

#[test]
fn diverging_training_exits_3() {
    let root = setup();
    let dir = root.path();
    assert_eq!(code(&atrm(&["simulate", "--clean", "clean", "--out", "d", "--frames", "2"], dir)), 0);
    let mut model = init_model::<f32>(NetworkConfig::desk(1), 1).unwrap();
    // The output layer has no normalization after it, so this overflows f32.
    let last = model.layers.last_mut().unwrap();
    last.conv.weights = last.conv.weights.map(|w| w.signum() * 1e38);
    let opt = AdamState::new(&model.trainable_lens());
    save_checkpoint(&model, Some(&opt), dir.join("huge.atrm")).unwrap();
    let o = atrm(&["train", "--data", "d", "--out", "m", "--epochs", "1", "--resume", "huge.atrm"], dir);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
