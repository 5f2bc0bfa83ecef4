//! Procedurally generated ground-truth scenes, so the pipeline can run
//! without external data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImageFrame;

pub const SCENE_SIZE: usize = 128;

/// 16 pixel squares alternating between 0.15 and 0.85.
pub fn chessboard(size: usize) -> ImageFrame {
    ImageFrame::from_fn(size, size, |x, y| if (x / 16 + y / 16) % 2 == 0 { 0.15 } else { 0.85 })
}

/// Running-bond brickwork with dark mortar and per-brick shading.
pub fn bricks(size: usize) -> ImageFrame {
    let (bw, bh, mortar) = (24, 12, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shades: Vec<f32> = (0..64 * 64).map(|_| rng.random_range(0.45..0.8)).collect();
    ImageFrame::from_fn(size, size, |x, y| {
        let row = y / bh;
        let xo = x + if row % 2 == 1 { bw / 2 } else { 0 };
        let col = xo / bw;
        if y % bh < mortar || xo % bw < mortar {
            0.12
        } else {
            let grain = 0.04 * ((x as f32 * 0.9).sin() * (y as f32 * 1.3).cos());
            shades[(row % 64) * 64 + col % 64] + grain
        }
    })
}

/// Overlapping flat rectangles and discs of random shade over faint
/// two-octave value noise.
pub fn shapes(size: usize) -> ImageFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let octaves: Vec<(usize, Vec<f32>)> = [4usize, 8]
        .iter()
        .map(|&cells| (cells, (0..(cells + 1) * (cells + 1)).map(|_| rng.random::<f32>()).collect()))
        .collect();
    // (cx, cy, half width, half height or radius, shade, is_disc)
    let shapes: Vec<(f32, f32, f32, f32, f32, bool)> = (0..48)
        .map(|_| {
            let hw = rng.random_range(2.0..14.0);
            (
                rng.random_range(0.0..size as f32),
                rng.random_range(0.0..size as f32),
                hw,
                rng.random_range(2.0..14.0),
                rng.random_range(0.05..0.95),
                rng.random_bool(0.4),
            )
        })
        .collect();
    ImageFrame::from_fn(size, size, |x, y| {
        let mut v = 0.0;
        for (i, (cells, grid)) in octaves.iter().enumerate() {
            let fx = x as f32 / size as f32 * *cells as f32;
            let fy = y as f32 / size as f32 * *cells as f32;
            let (ix, iy) = (fx as usize, fy as usize);
            let (tx, ty) = (fx - ix as f32, fy - iy as f32);
            let at = |i: usize, j: usize| grid[j * (cells + 1) + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bot = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            v += if i == 0 { 0.6 } else { 0.4 } * (top * (1.0 - ty) + bot * ty);
        }
        let mut out = 0.3 + 0.4 * v;
        let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
        for &(cx, cy, a, b, shade, disc) in &shapes {
            let inside = if disc {
                (px - cx).powi(2) + (py - cy).powi(2) < a * a
            } else {
                (px - cx).abs() < a && (py - cy).abs() < b
            };
            if inside {
                out = shade;
            }
        }
        out
    })
}

/// The three bundled scenes by name.
pub fn bundled() -> Vec<(&'static str, ImageFrame)> {
    vec![
        ("chessboard", chessboard(SCENE_SIZE)),
        ("bricks", bricks(SCENE_SIZE)),
        ("shapes", shapes(SCENE_SIZE)),
    ]
}
