//! Synthetic turbulence: `y = h x + b` with a spatially variant PSF blur `h`
//! and Gaussian sensor noise `b`, plus temporal frame averaging.

mod blur;
mod psf;

use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::image::{FrameSequence, ImageError, ImageFrame};
use crate::seed::derive_seed;

pub use blur::{add_noise, blur_with, draw_tile_psfs, plan_tiles, spatially_variant_blur, AxisSpan, Tile};
pub use psf::{format_psf, generate_psf_bank, load_psf, parse_psf, resize_psf, save_psf, Psf};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid PSF: {0}")]
    Psf(String),
    #[error("invalid distortion config: {0}")]
    Config(String),
    #[error("degenerate tiling: {0}")]
    Tiling(String),
    #[error("window of {window} frames ending at {t} does not fit a sequence of {len}")]
    Window { window: usize, t: usize, len: usize },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub const DEFAULT_PSF_COUNT: usize = 9;
pub const DEFAULT_PSF_SIZE: usize = 15;
pub const DEFAULT_PSF_SEED: u64 = 2019;

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionConfig {
    pub psf_bank: Vec<Psf>,
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Per-tile PSF rescaling factor is drawn uniformly from this range.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Standard deviation of the additive noise, in `[0, 1]` intensity units.
    pub noise_sigma: f64,
    pub blend_margin: usize,
    pub seed: u64,
}

impl Default for DistortionConfig {
    /// Nine generated 15x15 PSFs on a 3x3 grid, scale 0.5 to 1.5, noise 0.01,
    /// 8 pixel blend margin.
    fn default() -> Self {
        DistortionConfig {
            psf_bank: generate_psf_bank(DEFAULT_PSF_COUNT, DEFAULT_PSF_SIZE, DEFAULT_PSF_SEED)
                .expect("default bank parameters are valid"),
            tile_rows: 3,
            tile_cols: 3,
            scale_min: 0.5,
            scale_max: 1.5,
            noise_sigma: 0.01,
            blend_margin: 8,
            seed: 0,
        }
    }
}

impl DistortionConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.psf_bank.is_empty() {
            return bad("PSF bank is empty".into());
        }
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return bad(format!("tile grid {}x{} must be at least 1x1", self.tile_rows, self.tile_cols));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max <= 4.0) {
            return bad(format!(
                "scale range [{}, {}] must lie in (0, 4]",
                self.scale_min, self.scale_max
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

/// Blur then noise for frame `index` of a sequence.
pub fn simulate_frame(x: &ImageFrame, index: u64, config: &DistortionConfig) -> Result<ImageFrame, SimError> {
    let blurred = spatially_variant_blur(x, config, index)?;
    let noise_seed = derive_seed(derive_seed(config.seed, index), u64::MAX);
    add_noise(&blurred, config.noise_sigma, noise_seed)
}

/// `frames` independent distortions of the same ground truth.
pub fn simulate_sequence(x: &ImageFrame, frames: usize, config: &DistortionConfig) -> Result<FrameSequence, SimError> {
    if frames == 0 {
        return Err(SimError::Config("at least one frame must be simulated".into()));
    }
    config.validate()?;
    let out = (0..frames as u64)
        .into_par_iter()
        .map(|t| simulate_frame(x, t, config))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameSequence::new(out)?)
}

/// Pixel mean of frames `t + 1 - window ..= t`.
pub fn frame_average(seq: &FrameSequence, window: usize, t: usize) -> Result<ImageFrame, SimError> {
    if window == 0 || t >= seq.len() || t + 1 < window {
        return Err(SimError::Window {
            window,
            t,
            len: seq.len(),
        });
    }
    let frames = &seq.frames()[t + 1 - window..=t];
    let mut acc = vec![0.0f64; frames[0].pixels().len()];
    for f in frames {
        for (a, &v) in acc.iter_mut().zip(f.pixels()) {
            *a += v as f64;
        }
    }
    let (w, h, c) = frames[0].dims();
    let pixels = acc.into_iter().map(|v| (v / window as f64) as f32).collect();
    Ok(ImageFrame::new(w, h, c, pixels)?)
}

/// How network inputs are formed from a distorted sequence: each input
/// channel is a `window`-frame average, and `frames` consecutive averages
/// (ending at `t`) are stacked as channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalInput {
    frames: usize,
    window: usize,
}

impl TemporalInput {
    pub fn new(frames: usize, window: usize) -> Result<Self, SimError> {
        if frames != 1 && frames != 3 {
            return Err(SimError::Config(format!("input frames must be 1 or 3, got {frames}")));
        }
        if window == 0 {
            return Err(SimError::Config("averaging window must be at least 1".into()));
        }
        Ok(TemporalInput { frames, window })
    }

    pub fn single() -> Self {
        TemporalInput { frames: 1, window: 1 }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Earliest `t` with a complete history.
    pub fn first_valid(&self) -> usize {
        self.window - 1 + self.frames - 1
    }

    /// Output times for a sequence of `len` frames, aligned to the last
    /// frame of each window.
    pub fn valid_times(&self, len: usize) -> Result<Range<usize>, SimError> {
        if len <= self.first_valid() {
            return Err(SimError::Window {
                window: self.first_valid() + 1,
                t: len.saturating_sub(1),
                len,
            });
        }
        Ok(self.first_valid()..len)
    }

    pub fn input_at(&self, seq: &FrameSequence, t: usize) -> Result<ImageFrame, SimError> {
        if self.frames == 1 {
            return frame_average(seq, self.window, t);
        }
        if seq.len() > 0 && seq[0].channels() != 1 {
            return Err(SimError::Config("multi-frame input needs single-channel frames".into()));
        }
        if t < self.first_valid() {
            return Err(SimError::Window {
                window: self.first_valid() + 1,
                t,
                len: seq.len(),
            });
        }
        let avgs = (0..self.frames)
            .map(|k| frame_average(seq, self.window, t + k + 1 - self.frames))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&ImageFrame> = avgs.iter().collect();
        Ok(ImageFrame::stack(&refs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    fn textured() -> ImageFrame {
        ImageFrame::from_fn(64, 64, |x, y| {
            if ((x / 8) + (y / 8)) % 2 == 0 {
                0.2 + 0.002 * y as f32
            } else {
                0.8 - 0.003 * x as f32
            }
        })
    }

    #[test]
    fn sequence_basics() {
        let x = textured();
        let cfg = DistortionConfig::default();
        let one = simulate_sequence(&x, 1, &cfg).unwrap();
        assert_eq!(one.len(), 1);
        let seq = simulate_sequence(&x, 4, &cfg).unwrap();
        assert_eq!(seq, simulate_sequence(&x, 4, &cfg).unwrap());
        assert_eq!(seq[0], one[0]);
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(seq[i], seq[j]);
            }
        }
        assert!(simulate_sequence(&x, 0, &cfg).is_err());
    }

    #[test]
    fn identity_pipeline() {
        let x = textured();
        let cfg = DistortionConfig {
            psf_bank: vec![Psf::delta(1).unwrap()],
            scale_min: 1.0,
            scale_max: 1.0,
            noise_sigma: 0.0,
            ..DistortionConfig::default()
        };
        for f in simulate_sequence(&x, 3, &cfg).unwrap().frames() {
            assert_eq!(f, &x);
        }
    }

    #[test]
    fn stronger_blur_lowers_psnr() {
        let x = textured();
        let mut last = f64::INFINITY;
        for hi in [0.6, 1.2, 2.4] {
            let cfg = DistortionConfig {
                scale_min: 0.5,
                scale_max: hi,
                ..DistortionConfig::default()
            };
            let seq = simulate_sequence(&x, 6, &cfg).unwrap();
            let mean = seq.frames().iter().map(|f| psnr(f, &x, 1.0).unwrap()).sum::<f64>() / 6.0;
            assert!(mean < last, "{mean} !< {last}");
            last = mean;
        }
    }

    #[test]
    fn averaging() {
        let x = textured();
        let seq = simulate_sequence(&x, 10, &DistortionConfig::default()).unwrap();
        assert_eq!(frame_average(&seq, 1, 3).unwrap(), seq[3]);
        let same = FrameSequence::new(vec![x.clone(); 4]).unwrap();
        let avg = frame_average(&same, 4, 3).unwrap();
        assert!(avg.pixels().iter().zip(x.pixels()).all(|(a, b)| (a - b).abs() < 1e-6));
        assert!(frame_average(&seq, 5, 3).is_err());
        assert!(frame_average(&seq, 0, 3).is_err());
        assert!(frame_average(&seq, 1, 10).is_err());
        let avg = frame_average(&seq, 10, 9).unwrap();
        let single = seq.frames().iter().map(|f| psnr(f, &x, 1.0).unwrap()).sum::<f64>() / 10.0;
        assert!(psnr(&avg, &x, 1.0).unwrap() > single);
    }

    #[test]
    fn temporal_input_windows() {
        let m = TemporalInput::new(1, 30).unwrap();
        assert_eq!(m.valid_times(100).unwrap().len(), 71);
        assert_eq!(TemporalInput::single().valid_times(5).unwrap(), 0..5);
        let m3 = TemporalInput::new(3, 5).unwrap();
        assert_eq!(m3.first_valid(), 6);
        assert!(TemporalInput::new(3, 1).unwrap().valid_times(2).is_err());
        assert!(TemporalInput::new(2, 1).is_err());

        let frames: Vec<ImageFrame> = (0..8).map(|i| ImageFrame::filled(4, 4, 1, i as f32)).collect();
        let seq = FrameSequence::new(frames).unwrap();
        let inp = m3.input_at(&seq, 7).unwrap();
        assert_eq!(inp.channels(), 3);
        // averages of frames 1..=5, 2..=6, 3..=7
        assert_eq!([inp.get(0, 0, 0), inp.get(1, 0, 0), inp.get(2, 0, 0)], [3.0, 4.0, 5.0]);
        assert!(m3.input_at(&seq, 5).is_err());
    }
}
