//! On-disk scene layout:
//!
//! ```text
//! <scene>/clean.pgm            ground truth (.ppm for colour)
//! <scene>/distorted_0001.pgm   distorted frames, numbered from 1
//! <scene>/distorted_0002.pgm
//! ```
//!
//! A data directory is either a scene itself or holds scene subdirectories.

use std::path::{Path, PathBuf};

use thiserror::Error;

use super::pnm::{read_image, write_image, PnmError};
use crate::image::{FrameSequence, ImageError, ImageFrame};

pub const CLEAN_STEM: &str = "clean";
pub const DISTORTED_PREFIX: &str = "distorted_";
pub const RESTORED_PREFIX: &str = "restored_";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error("{0}: no frames found")]
    NoFrames(String),
    #[error("{0}: no scenes found (expected clean.pgm or clean.ppm)")]
    NoScenes(String),
    #[error("{path}: {source}")]
    Image {
        path: String,
        #[source]
        source: ImageError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |e| DatasetError::Io(path.display().to_string(), e)
}

fn extension(frame: &ImageFrame) -> &'static str {
    if frame.channels() == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

/// `<dir>/<prefix><index:04>.<pgm|ppm>`
pub fn frame_path(dir: &Path, prefix: &str, index: usize, frame: &ImageFrame) -> PathBuf {
    dir.join(format!("{prefix}{index:04}.{}", extension(frame)))
}

pub fn clean_path(dir: &Path) -> Option<PathBuf> {
    ["pgm", "ppm"]
        .iter()
        .map(|e| dir.join(format!("{CLEAN_STEM}.{e}")))
        .find(|p| p.is_file())
}

/// Numbered `<prefix>NNNN.pgm|ppm` files in `dir`, ordered by number.
pub fn numbered_frames(dir: &Path, prefix: &str) -> Result<Vec<(usize, PathBuf)>, DatasetError> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let (Some(stem), Some(ext)) = (path.file_stem().and_then(|s| s.to_str()), path.extension()) else {
            continue;
        };
        if ext != "pgm" && ext != "ppm" {
            continue;
        }
        if let Some(n) = stem.strip_prefix(prefix).and_then(|n| n.parse::<usize>().ok()) {
            found.push((n, path));
        }
    }
    found.sort();
    Ok(found)
}

/// Reads numbered frames into a sequence, returning their numbers too.
pub fn read_sequence(dir: &Path, prefix: &str) -> Result<(Vec<usize>, FrameSequence), DatasetError> {
    let files = numbered_frames(dir, prefix)?;
    if files.is_empty() {
        return Err(DatasetError::NoFrames(dir.display().to_string()));
    }
    let mut numbers = Vec::with_capacity(files.len());
    let mut frames = Vec::with_capacity(files.len());
    for (n, p) in files {
        numbers.push(n);
        frames.push(read_image(&p)?);
    }
    let seq = FrameSequence::new(frames).map_err(|source| DatasetError::Image {
        path: dir.display().to_string(),
        source,
    })?;
    Ok((numbers, seq))
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub dir: PathBuf,
    pub clean: ImageFrame,
    pub distorted: FrameSequence,
}

pub fn load_scene(dir: &Path) -> Result<Scene, DatasetError> {
    let clean_file = clean_path(dir).ok_or_else(|| DatasetError::NoScenes(dir.display().to_string()))?;
    let clean = read_image(&clean_file)?;
    let (_, distorted) = read_sequence(dir, DISTORTED_PREFIX)?;
    clean.same_dims(&distorted[0]).map_err(|source| DatasetError::Image {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(Scene {
        name: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        dir: dir.to_path_buf(),
        clean,
        distorted,
    })
}

/// Scene directories under `root` (or `root` itself if it is a scene),
/// sorted by path.
pub fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    if clean_path(root).is_some() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(io_err(root))? {
        let path = entry.map_err(io_err(root))?.path();
        if path.is_dir() && clean_path(&path).is_some() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(DatasetError::NoScenes(root.display().to_string()));
    }
    Ok(dirs)
}

pub fn load_dataset(root: &Path) -> Result<Vec<Scene>, DatasetError> {
    scene_dirs(root)?.iter().map(|d| load_scene(d)).collect()
}

/// Clean inputs for simulation: image files directly in `dir` (each becomes
/// a scene named after its stem), or the `clean.*` of scene subdirectories.
pub fn clean_inputs(dir: &Path) -> Result<Vec<(String, PathBuf)>, DatasetError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if path.is_file() && matches!(ext, Some("pgm" | "ppm")) {
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            out.push((stem, path));
        } else if path.is_dir() {
            if let Some(c) = clean_path(&path) {
                out.push((path.file_name().unwrap().to_string_lossy().into_owned(), c));
            }
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(DatasetError::NoScenes(dir.display().to_string()));
    }
    Ok(out)
}

/// Writes `clean.*` and `distorted_0001.*`... into `dir`, creating it.
pub fn write_scene(dir: &Path, clean: &ImageFrame, distorted: &FrameSequence) -> Result<Vec<PathBuf>, DatasetError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::with_capacity(distorted.len() + 1);
    let cp = dir.join(format!("{CLEAN_STEM}.{}", extension(clean)));
    write_image(clean, &cp)?;
    written.push(cp);
    for (i, f) in distorted.frames().iter().enumerate() {
        let p = frame_path(dir, DISTORTED_PREFIX, i + 1, f);
        write_image(f, &p)?;
        written.push(p);
    }
    Ok(written)
}
