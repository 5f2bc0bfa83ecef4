//! The four end-to-end workflows behind the `atrm` command line:
//! simulate, train, restore and evaluate.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde_json::json;
use thiserror::Error;

use crate::image::{FrameSequence, ImageFrame};
use crate::io::dataset::{self, DatasetError, DISTORTED_PREFIX, RESTORED_PREFIX};
use crate::io::{read_image, write_image, ConfigError, DistortionSettings, PnmError, RunManifest, Throughput};
use crate::metrics::{evaluate_scene, MetricError, SceneReport};
use crate::network::{
    init_model, load_checkpoint, save_checkpoint, CheckpointError, Model, NetworkConfig, NetworkError,
};
use crate::seed::derive_seed;
use crate::sim::{simulate_sequence, SimError, TemporalInput};
use crate::training::{build_pairs, train, write_loss_csv, AdamState, Preset, TrainError, TrainingPair};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl WorkflowError {
    /// 1 usage error, 2 data error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            WorkflowError::Usage(_) => 1,
            WorkflowError::Data(_) => 2,
            WorkflowError::Numerical(_) => 3,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for WorkflowError {
            fn from(e: $t) -> Self {
                WorkflowError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(DatasetError, PnmError, ConfigError, SimError, NetworkError, CheckpointError, MetricError);

impl From<TrainError> for WorkflowError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => WorkflowError::Numerical(e.to_string()),
            other => WorkflowError::Data(other.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> WorkflowError + '_ {
    move |e| WorkflowError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    /// Directory of clean images, or of scene directories holding `clean.*`.
    pub clean: PathBuf,
    pub out: PathBuf,
    pub frames: usize,
    pub config: Option<PathBuf>,
    pub seed: u64,
}

/// Simulates `frames` distorted frames per clean image and writes one scene
/// directory per image plus `manifest.json` under `out`. Scene `i` (in
/// name order) uses simulator seed `derive_seed(seed, i)`.
pub fn simulate(opts: &SimulateOptions) -> Result<RunManifest, WorkflowError> {
    if opts.frames == 0 {
        return Err(WorkflowError::Usage("--frames must be at least 1".into()));
    }
    let settings = match &opts.config {
        Some(p) => DistortionSettings::load(p)?,
        None => DistortionSettings::default(),
    };
    let inputs = dataset::clean_inputs(&opts.clean)?;
    let mut manifest = RunManifest::new(
        "simulate",
        Some(opts.seed),
        json!({ "frames": opts.frames, "distortion": settings }),
    );
    if let Some(p) = &opts.config {
        manifest.add_input(p).map_err(io_error(p))?;
    }
    for p in &settings.psf_files {
        manifest.add_input(p).map_err(io_error(p))?;
    }
    for (i, (name, path)) in inputs.iter().enumerate() {
        manifest.add_input(path).map_err(io_error(path))?;
        let clean = read_image(path)?;
        let config = settings.build(derive_seed(opts.seed, i as u64))?;
        let seq = simulate_sequence(&clean, opts.frames, &config)?;
        info!("{name}: {} frames", seq.len());
        for p in dataset::write_scene(&opts.out.join(name), &clean, &seq)? {
            manifest.add_output(&p).map_err(io_error(&p))?;
        }
    }
    let mpath = opts.out.join("manifest.json");
    manifest.write(&mpath).map_err(io_error(&mpath))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub data: PathBuf,
    pub preset: Preset,
    pub out: PathBuf,
    pub in_frames: usize,
    pub avg_window: usize,
    pub seed: u64,
    pub epochs: Option<usize>,
    /// Continue from this checkpoint (model and optimizer state).
    pub resume: Option<PathBuf>,
}

/// Sidecar paths next to a checkpoint: `<out>.loss.csv`, `<out>.manifest.json`.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Training pairs from every scene of a dataset for the given input mode.
pub fn dataset_pairs(scenes: &[dataset::Scene], mode: &TemporalInput) -> Result<Vec<TrainingPair>, WorkflowError> {
    let mut pairs = Vec::new();
    for s in scenes {
        if mode.frames() > 1 && s.clean.channels() != 1 {
            return Err(WorkflowError::Data(format!(
                "{}: multi-frame input needs grayscale scenes",
                s.name
            )));
        }
        pairs.extend(
            build_pairs(&s.clean, &s.distorted, mode)
                .map_err(|e| WorkflowError::Data(format!("{}: {e}", s.name)))?,
        );
    }
    Ok(pairs)
}

/// Trains a model on a dataset directory and writes the checkpoint (with
/// optimizer state), the loss trace and a manifest.
pub fn train_model(opts: &TrainOptions) -> Result<RunManifest, WorkflowError> {
    let mode = TemporalInput::new(opts.in_frames, opts.avg_window).map_err(|e| WorkflowError::Usage(e.to_string()))?;
    let scenes = dataset::load_dataset(&opts.data)?;
    let pairs = dataset_pairs(&scenes, &mode)?;
    let channels = pairs[0].input.channels();

    let mut tc = opts.preset.training();
    tc.seed = opts.seed;
    if let Some(e) = opts.epochs {
        tc.epochs = e;
    }
    if opts.in_frames == 3 {
        tc.resize_augment = Some((0.7, 1.0));
    }
    let (mut model, mut optimizer) = match &opts.resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            if ck.model.config().in_channels != channels {
                return Err(WorkflowError::Data(format!(
                    "checkpoint takes {} channels, data provides {channels}",
                    ck.model.config().in_channels
                )));
            }
            let opt = ck.optimizer.unwrap_or_else(|| AdamState::new(&ck.model.trainable_lens()));
            (ck.model, opt)
        }
        None => {
            let m: Model<f32> = init_model(opts.preset.network(channels), opts.seed)?;
            let opt = AdamState::new(&m.trainable_lens());
            (m, opt)
        }
    };
    let mut manifest = RunManifest::new(
        "train",
        Some(opts.seed),
        json!({
            "preset": opts.preset,
            "network": model.config(),
            "training": tc,
            "in_frames": opts.in_frames,
            "avg_window": opts.avg_window,
            "resume": opts.resume,
            "start_step": optimizer.step,
        }),
    );
    for s in &scenes {
        for p in dataset::numbered_frames(&s.dir, DISTORTED_PREFIX)? {
            manifest.add_input(&p.1).map_err(io_error(&p.1))?;
        }
        if let Some(c) = dataset::clean_path(&s.dir) {
            manifest.add_input(&c).map_err(io_error(&c))?;
        }
    }
    if let Some(p) = &opts.resume {
        manifest.add_input(p).map_err(io_error(p))?;
    }

    let log = train(&mut model, &mut optimizer, &pairs, &tc)?;
    save_checkpoint(&model, Some(&optimizer), &opts.out)?;
    let csv = sidecar(&opts.out, ".loss.csv");
    let file = fs::File::create(&csv).map_err(io_error(&csv))?;
    write_loss_csv(&log, std::io::BufWriter::new(file)).map_err(io_error(&csv))?;
    manifest.add_output(&opts.out).map_err(io_error(&opts.out))?;
    manifest.add_output(&csv).map_err(io_error(&csv))?;
    let mpath = sidecar(&opts.out, ".manifest.json");
    manifest.write(&mpath).map_err(io_error(&mpath))?;
    Ok(manifest)
}

/// Picks the input mode for a model: the model takes either the frames'
/// own channel count (single frame) or three stacked grayscale frames.
pub fn input_mode(config: &NetworkConfig, frame_channels: usize, window: usize) -> Result<TemporalInput, WorkflowError> {
    let frames = if config.in_channels == frame_channels {
        1
    } else if config.in_channels == 3 && frame_channels == 1 {
        3
    } else {
        return Err(WorkflowError::Data(format!(
            "model takes {} channels but frames have {frame_channels}",
            config.in_channels
        )));
    };
    TemporalInput::new(frames, window).map_err(|e| WorkflowError::Usage(e.to_string()))
}

/// Restores every valid time step of `seq`. Returns `(t, frame)` pairs with
/// `t` the 0-based index of the window's last frame. For three-frame models
/// the centre output channel is kept.
pub fn restore_sequence(
    model: &Model<f32>,
    seq: &FrameSequence,
    window: usize,
) -> Result<Vec<(usize, ImageFrame)>, WorkflowError> {
    let mode = input_mode(model.config(), seq[0].channels(), window)?;
    let times = mode.valid_times(seq.len()).map_err(|e| WorkflowError::Data(e.to_string()))?;
    times
        .map(|t| {
            let input = mode.input_at(seq, t)?;
            let restored = model.restore(&input.to_tensor::<f32>())?;
            let mut frame = ImageFrame::from_tensor(&restored, 0).map_err(|e| WorkflowError::Data(e.to_string()))?;
            if mode.frames() == 3 {
                frame = frame.channel(1);
            }
            Ok((t, frame))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RestoreOptions {
    pub model: PathBuf,
    /// Directory of `distorted_NNNN` frames.
    pub input: PathBuf,
    pub out: PathBuf,
    pub avg_window: usize,
    /// Record pixels/second in the manifest.
    pub report: bool,
}

/// Writes `restored_NNNN` frames (numbered like the last input frame of
/// each window) and `manifest.json` into `out`.
pub fn restore(opts: &RestoreOptions) -> Result<RunManifest, WorkflowError> {
    if opts.avg_window == 0 {
        return Err(WorkflowError::Usage("--avg-window must be at least 1".into()));
    }
    let ck = load_checkpoint(&opts.model)?;
    let (numbers, seq) = dataset::read_sequence(&opts.input, DISTORTED_PREFIX)?;
    let mut manifest = RunManifest::new(
        "restore",
        None,
        json!({ "network": ck.model.config(), "avg_window": opts.avg_window }),
    );
    manifest.add_input(&opts.model).map_err(io_error(&opts.model))?;
    for (_, p) in dataset::numbered_frames(&opts.input, DISTORTED_PREFIX)? {
        manifest.add_input(&p).map_err(io_error(&p))?;
    }
    let start = Instant::now();
    let restored = restore_sequence(&ck.model, &seq, opts.avg_window)?;
    let seconds = start.elapsed().as_secs_f64();

    fs::create_dir_all(&opts.out).map_err(io_error(&opts.out))?;
    let mut pixels = 0u64;
    for (t, frame) in &restored {
        pixels += (frame.width() * frame.height()) as u64;
        let p = dataset::frame_path(&opts.out, RESTORED_PREFIX, numbers[*t], frame);
        write_image(frame, &p)?;
        manifest.add_output(&p).map_err(io_error(&p))?;
    }
    if opts.report {
        let tp = Throughput::new(restored.len(), pixels, seconds);
        info!("restored {} frames at {:.0} pixels/s", tp.frames, tp.pixels_per_second);
        manifest.throughput = Some(tp);
    }
    let mpath = opts.out.join("manifest.json");
    manifest.write(&mpath).map_err(io_error(&mpath))?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    /// Directory of `restored_NNNN` (or, failing that, `distorted_NNNN`) frames.
    pub restored: PathBuf,
    pub clean: PathBuf,
    pub out: PathBuf,
}

/// Scores every frame against the clean image and writes the report CSV.
pub fn evaluate(opts: &EvaluateOptions) -> Result<SceneReport, WorkflowError> {
    let clean = read_image(&opts.clean)?;
    let (numbers, seq) = match dataset::read_sequence(&opts.restored, RESTORED_PREFIX) {
        Err(DatasetError::NoFrames(_)) => dataset::read_sequence(&opts.restored, DISTORTED_PREFIX)
            .map_err(|_| WorkflowError::Data(format!("{}: no frames to evaluate", opts.restored.display())))?,
        other => other?,
    };
    let mut report = evaluate_scene(seq.frames(), &clean)?;
    report.labels = numbers.iter().map(|n| n.to_string()).collect();
    let file = fs::File::create(&opts.out).map_err(io_error(&opts.out))?;
    report
        .write_csv(std::io::BufWriter::new(file))
        .map_err(io_error(&opts.out))?;
    Ok(report)
}
