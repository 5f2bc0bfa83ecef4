use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::psf::{resize_psf, Psf};
use super::{DistortionConfig, SimError};
use crate::image::ImageFrame;
use crate::seed::derive_seed;

/// Half-sample symmetric reflection, edge pixel repeated (`cba|abcd|dcb`).
/// With a symmetric kernel the padded convolution conserves total mass.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - 1 - m }) as usize
}

/// Feathering weights along one axis for one tile: `start..end` is the
/// support, `weights[k]` the weight at `start + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpan {
    pub start: usize,
    pub end: usize,
    pub weights: Vec<f64>,
}

fn plan_axis(len: usize, parts: usize, margin: usize) -> Result<Vec<AxisSpan>, SimError> {
    if parts == 0 || parts > len {
        return Err(SimError::Tiling(format!("cannot split {len} pixels into {parts} tiles")));
    }
    let edges: Vec<usize> = (0..=parts).map(|i| (i * len + parts / 2) / parts).collect();
    if parts > 1 {
        if let Some(w) = edges.windows(2).map(|e| e[1] - e[0]).find(|&w| w <= 2 * margin) {
            return Err(SimError::Tiling(format!(
                "tiles of {w} pixels are too small for a {margin} pixel blend margin"
            )));
        }
    }
    // Across each internal boundary b, the incoming tile's weight ramps
    // linearly over [b - margin, b + margin).
    let ramp = |p: usize, b: usize| -> f64 {
        let lo = b as f64 - margin as f64;
        ((p as f64 + 0.5 - lo) / (2 * margin) as f64).clamp(0.0, 1.0)
    };
    Ok((0..parts)
        .map(|i| {
            let start = if i == 0 { 0 } else { edges[i] - margin };
            let end = if i + 1 == parts { len } else { edges[i + 1] + margin };
            let weights = (start..end)
                .map(|p| {
                    let rise = if i == 0 || margin == 0 { 1.0 } else { ramp(p, edges[i]) };
                    let fall = if i + 1 == parts || margin == 0 {
                        1.0
                    } else {
                        1.0 - ramp(p, edges[i + 1])
                    };
                    if margin == 0 && (p < edges[i] || p >= edges[i + 1]) {
                        0.0
                    } else {
                        rise.min(fall)
                    }
                })
                .collect();
            AxisSpan { start, end, weights }
        })
        .collect())
}

/// One tile of the blending grid; its weight at `(x, y)` is
/// `cols.weights[x - cols.start] * rows.weights[y - rows.start]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub rows: AxisSpan,
    pub cols: AxisSpan,
}

/// Splits a `width x height` image into a `rows x cols` grid of tiles whose
/// feathered weights sum to one at every pixel. Each internal boundary is
/// blended over `2 * margin` pixels, so every tile must be wider than that.
pub fn plan_tiles(width: usize, height: usize, rows: usize, cols: usize, margin: usize) -> Result<Vec<Tile>, SimError> {
    let ys = plan_axis(height, rows, margin)?;
    let xs = plan_axis(width, cols, margin)?;
    let mut tiles = Vec::with_capacity(rows * cols);
    for (r, ry) in ys.iter().enumerate() {
        for (c, cx) in xs.iter().enumerate() {
            tiles.push(Tile {
                row: r,
                col: c,
                rows: ry.clone(),
                cols: cx.clone(),
            });
        }
    }
    Ok(tiles)
}

/// The PSF chosen for each tile (row-major) from `config` and `frame_seed`.
pub fn draw_tile_psfs(config: &DistortionConfig, frame_seed: u64) -> Result<Vec<Psf>, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, frame_seed));
    (0..config.tile_rows * config.tile_cols)
        .map(|_| {
            let psf = &config.psf_bank[rng.random_range(0..config.psf_bank.len())];
            let scale = if config.scale_max > config.scale_min {
                rng.random_range(config.scale_min..=config.scale_max)
            } else {
                config.scale_min
            };
            resize_psf(psf, scale)
        })
        .collect()
}

/// Convolution (kernel flipped) of one channel plane with reflective borders,
/// evaluated only on `tile`, weighted and accumulated into `out`.
fn blur_tile(plane: &[f32], width: usize, height: usize, psf: &Psf, tile: &Tile, out: &mut [f64]) {
    let r = psf.radius() as isize;
    let n = psf.size();
    let k = psf.kernel();
    let rows: Vec<Vec<usize>> = (tile.rows.start..tile.rows.end)
        .map(|y| (0..n).map(|u| reflect(y as isize + r - u as isize, height)).collect())
        .collect();
    let cols: Vec<Vec<usize>> = (tile.cols.start..tile.cols.end)
        .map(|x| (0..n).map(|v| reflect(x as isize + r - v as isize, width)).collect())
        .collect();
    for (yi, (ry, wy)) in rows.iter().zip(&tile.rows.weights).enumerate() {
        if *wy == 0.0 {
            continue;
        }
        let y = tile.rows.start + yi;
        for (xi, (cx, wx)) in cols.iter().zip(&tile.cols.weights).enumerate() {
            if *wx == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for (u, &sy) in ry.iter().enumerate() {
                let src = &plane[sy * width..(sy + 1) * width];
                let ku = &k[u * n..(u + 1) * n];
                for (kv, &sx) in ku.iter().zip(cx) {
                    acc += kv * src[sx] as f64;
                }
            }
            out[y * width + tile.cols.start + xi] += wy * wx * acc;
        }
    }
}

/// Blurs each region of `x` with its own randomly drawn and rescaled PSF,
/// feathering between regions. Every channel sees the same PSFs.
/// Deterministic per `(config.seed, frame_seed)`.
pub fn spatially_variant_blur(x: &ImageFrame, config: &DistortionConfig, frame_seed: u64) -> Result<ImageFrame, SimError> {
    let psfs = draw_tile_psfs(config, frame_seed)?;
    blur_with(x, config, &psfs)
}

/// [`spatially_variant_blur`] with explicitly chosen per-tile PSFs.
pub fn blur_with(x: &ImageFrame, config: &DistortionConfig, psfs: &[Psf]) -> Result<ImageFrame, SimError> {
    let (w, h, ch) = x.dims();
    let tiles = plan_tiles(w, h, config.tile_rows, config.tile_cols, config.blend_margin)?;
    if psfs.len() != tiles.len() {
        return Err(SimError::Config(format!("{} PSFs for {} tiles", psfs.len(), tiles.len())));
    }
    let mut pixels = Vec::with_capacity(w * h * ch);
    for c in 0..ch {
        let mut acc = vec![0.0f64; w * h];
        for (tile, psf) in tiles.iter().zip(psfs) {
            blur_tile(x.plane(c), w, h, psf, tile, &mut acc);
        }
        pixels.extend(acc.into_iter().map(|v| v as f32));
    }
    Ok(ImageFrame::new(w, h, ch, pixels)?)
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every pixel, without clamping.
pub fn add_noise(img: &ImageFrame, sigma: f64, seed: u64) -> Result<ImageFrame, SimError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SimError::Config(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut out = img.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma checked above");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.pixels_mut() {
        *v = (*v as f64 + normal.sample(&mut rng)) as f32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{conv2d_forward, ConvSpec, Tensor};

    fn textured(w: usize, h: usize) -> ImageFrame {
        ImageFrame::from_fn(w, h, |x, y| {
            let (x, y) = (x as f32, y as f32);
            0.5 + 0.25 * (x * 0.37).sin() * (y * 0.21).cos() + 0.2 * ((x + 2.0 * y) * 0.9).sin()
        })
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 4, 4, 3, 2]);
        assert_eq!(reflect(-4, 1), 0);
    }

    #[test]
    fn tile_weights_partition_unity() {
        for (w, h, r, c, m) in [(64, 54, 3, 3, 8), (50, 50, 2, 4, 5), (30, 20, 1, 1, 8), (31, 17, 2, 3, 0)] {
            let tiles = plan_tiles(w, h, r, c, m).unwrap();
            let mut sum = vec![0.0; w * h];
            for t in &tiles {
                for (yi, wy) in t.rows.weights.iter().enumerate() {
                    for (xi, wx) in t.cols.weights.iter().enumerate() {
                        assert!((0.0..=1.0).contains(&(wy * wx)));
                        sum[(t.rows.start + yi) * w + t.cols.start + xi] += wy * wx;
                    }
                }
            }
            assert!(sum.iter().all(|s| (s - 1.0).abs() < 1e-12), "{w}x{h} {r}x{c} m{m}");
        }
        assert!(plan_tiles(48, 48, 3, 3, 8).is_err());
        assert!(plan_tiles(51, 51, 3, 3, 8).is_ok());
        assert!(plan_tiles(4, 4, 5, 1, 0).is_err());
    }

    #[test]
    fn delta_bank_is_identity() {
        let x = textured(60, 54);
        let config = DistortionConfig {
            psf_bank: vec![Psf::delta(9).unwrap()],
            scale_min: 1.0,
            scale_max: 1.0,
            ..DistortionConfig::default()
        };
        for s in 0..3 {
            let y = spatially_variant_blur(&x, &config, s).unwrap();
            let err = y.pixels().iter().zip(x.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
            assert!(err < 1e-6);
        }
    }

    #[test]
    fn single_tile_matches_reflect_padded_conv() {
        let x = textured(23, 19);
        let config = DistortionConfig {
            tile_rows: 1,
            tile_cols: 1,
            ..DistortionConfig::default()
        };
        let psf = &draw_tile_psfs(&config, 4).unwrap()[0];
        let got = spatially_variant_blur(&x, &config, 4).unwrap();

        let r = psf.radius();
        let (pw, ph) = (23 + 2 * r, 19 + 2 * r);
        let mut padded = vec![0.0f64; pw * ph];
        for yy in 0..ph {
            for xx in 0..pw {
                let sy = reflect(yy as isize - r as isize, 19);
                let sx = reflect(xx as isize - r as isize, 23);
                padded[yy * pw + xx] = x.get(0, sx, sy) as f64;
            }
        }
        let n = psf.size();
        let flipped: Vec<f64> = (0..n * n).map(|i| psf.kernel()[n * n - 1 - i]).collect();
        let input = Tensor::from_vec(&[1, 1, ph, pw], padded).unwrap();
        let weights = Tensor::from_vec(&[1, 1, n, n], flipped).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &weights, &bias, &ConvSpec::new(1, 1, n).unwrap()).unwrap();
        for y in 0..19 {
            for xx in 0..23 {
                let want = out.data()[(y + r) * pw + xx + r];
                assert!((got.get(0, xx, y) as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_stays_constant_and_mean_is_kept() {
        let config = DistortionConfig::default();
        let c = ImageFrame::filled(64, 64, 1, 0.37);
        let y = spatially_variant_blur(&c, &config, 1).unwrap();
        assert!(y.pixels().iter().all(|v| (v - 0.37).abs() < 1e-6));
        let x = textured(96, 80);
        let y = spatially_variant_blur(&x, &config, 2).unwrap();
        assert!((y.mean() - x.mean()).abs() < 1e-2);
    }

    #[test]
    fn color_channels_share_psfs() {
        let g = textured(60, 60);
        let rgb = ImageFrame::stack(&[&g, &g, &g]).unwrap();
        let config = DistortionConfig::default();
        let yg = spatially_variant_blur(&g, &config, 3).unwrap();
        let yc = spatially_variant_blur(&rgb, &config, 3).unwrap();
        for c in 0..3 {
            assert_eq!(yc.plane(c), yg.pixels());
        }
    }

    #[test]
    fn noise_statistics() {
        let x = ImageFrame::filled(256, 256, 1, 0.5);
        assert_eq!(add_noise(&x, 0.0, 1).unwrap(), x);
        let a = add_noise(&x, 0.02, 1).unwrap();
        let b = add_noise(&x, 0.02, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, add_noise(&x, 0.02, 1).unwrap());
        let n = a.pixels().len() as f64;
        let d: Vec<f64> = a.pixels().iter().map(|&v| v as f64 - 0.5).collect();
        let mean = d.iter().sum::<f64>() / n;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((std / 0.02 - 1.0).abs() < 0.05);
        assert!(add_noise(&x, -1.0, 0).is_err());
    }
}
