//! Full-reference quality metrics: MSE, PSNR and SSIM.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::image::{ImageError, ImageFrame};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// `(0.01 * peak)^2` and `(0.03 * peak)^2` for peak 1.
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Shape(#[from] ImageError),
    #[error("{width}x{height} image is smaller than the {window}x{window} SSIM window")]
    TooSmall { width: usize, height: usize, window: usize },
    #[error("no frames to evaluate")]
    NoFrames,
}

pub fn mse(a: &ImageFrame, b: &ImageFrame) -> Result<f64, MetricError> {
    a.same_dims(b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `10 log10(peak^2 / MSE)` in dB; `f64::INFINITY` for identical images.
pub fn psnr(a: &ImageFrame, b: &ImageFrame, peak: f64) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter over the valid region.
fn filter_valid(p: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &p[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = g.iter().zip(&row[x..x + n]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (k, gv) in g.iter().enumerate() {
            let src = &horiz[(y + k) * ow..(y + k + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += gv * s;
            }
        }
    }
    out
}

fn ssim_plane(a: &[f32], b: &[f32], w: usize, h: usize, g: &[f64]) -> f64 {
    let a: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&a, w, h, g);
    let mu_b = filter_valid(&b, w, h, g);
    let e_aa = filter_valid(&prod(&a, &a), w, h, g);
    let e_bb = filter_valid(&prod(&b, &b), w, h, g);
    let e_ab = filter_valid(&prod(&a, &b), w, h, g);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let (aa, bb, ab) = (ma * ma, mb * mb, ma * mb);
        let va = e_aa[i] - aa;
        let vb = e_bb[i] - bb;
        let cov = e_ab[i] - ab;
        total += ((2.0 * ab + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((aa + bb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    total / mu_a.len() as f64
}

/// Mean local SSIM (11x11 Gaussian window, sigma 1.5) over all window
/// positions fully inside the image, averaged over channels.
pub fn ssim(a: &ImageFrame, b: &ImageFrame) -> Result<f64, MetricError> {
    a.same_dims(b)?;
    let (w, h, c) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let g = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    Ok((0..c).map(|ch| ssim_plane(a.plane(ch), b.plane(ch), w, h, &g)).sum::<f64>() / c as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: f64,
}

/// Scores `restored` against `clean` with peak 1.
pub fn evaluate(restored: &ImageFrame, clean: &ImageFrame) -> Result<QualityReport, MetricError> {
    let m = mse(restored, clean)?;
    Ok(QualityReport {
        psnr_db: psnr_from_mse(m, 1.0),
        ssim: ssim(restored, clean)?,
        mse: m,
    })
}

/// Per-frame reports and their arithmetic means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneReport {
    pub labels: Vec<String>,
    pub frames: Vec<QualityReport>,
    pub mean: QualityReport,
}

impl SceneReport {
    pub fn from_reports(labels: Vec<String>, frames: Vec<QualityReport>) -> Result<Self, MetricError> {
        if frames.is_empty() {
            return Err(MetricError::NoFrames);
        }
        let n = frames.len() as f64;
        let mean = QualityReport {
            psnr_db: frames.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            ssim: frames.iter().map(|r| r.ssim).sum::<f64>() / n,
            mse: frames.iter().map(|r| r.mse).sum::<f64>() / n,
        };
        Ok(SceneReport { labels, frames, mean })
    }

    /// `frame,psnr_db,ssim,mse` rows followed by a `mean` row.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "frame,psnr_db,ssim,mse")?;
        let row = |r: &QualityReport| format!("{:.6},{:.8},{:.10e}", r.psnr_db, r.ssim, r.mse);
        for (label, r) in self.labels.iter().zip(&self.frames) {
            writeln!(out, "{label},{}", row(r))?;
        }
        writeln!(out, "mean,{}", row(&self.mean))
    }
}

/// Evaluates every restored frame against the single clean frame; rows are
/// labelled by frame index.
pub fn evaluate_scene(restored: &[ImageFrame], clean: &ImageFrame) -> Result<SceneReport, MetricError> {
    if restored.is_empty() {
        return Err(MetricError::NoFrames);
    }
    let frames = restored
        .par_iter()
        .map(|f| evaluate(f, clean))
        .collect::<Result<Vec<_>, _>>()?;
    SceneReport::from_reports((0..restored.len()).map(|i| i.to_string()).collect(), frames)
}
