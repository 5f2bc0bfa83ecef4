use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::image::ImageFrame;
use crate::tensor::Tensor;

/// A network input (one or more stacked channels) and its clean target with
/// the same channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: ImageFrame,
    pub target: ImageFrame,
}

impl TrainingPair {
    pub fn new(input: ImageFrame, target: ImageFrame) -> Result<Self, TrainError> {
        if input.dims() != target.dims() {
            return Err(TrainError::Config(format!(
                "input {:?} and target {:?} differ in size",
                input.dims(),
                target.dims()
            )));
        }
        Ok(TrainingPair { input, target })
    }

    pub fn width(&self) -> usize {
        self.input.width()
    }

    pub fn height(&self) -> usize {
        self.input.height()
    }
}

/// Where a patch was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchOrigin {
    pub pair: usize,
    pub x: usize,
    pub y: usize,
    /// Size of the (possibly rescaled) pair the crop was taken from.
    pub source_width: usize,
    pub source_height: usize,
}

/// `[count, C, patch, patch]` inputs and targets.
#[derive(Debug, Clone)]
pub struct PatchBatch {
    pub inputs: Tensor<f32>,
    pub targets: Tensor<f32>,
    pub origins: Vec<PatchOrigin>,
}

/// Rescales both frames of a pair by the same factor (bilinear). Fails if the
/// result would be smaller than `min_size` on either side.
pub fn augment_resize(pair: &TrainingPair, scale: f64, min_size: usize) -> Result<TrainingPair, TrainError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(TrainError::Config(format!("resize scale must be positive, got {scale}")));
    }
    let w = (pair.width() as f64 * scale).round() as usize;
    let h = (pair.height() as f64 * scale).round() as usize;
    if w < min_size.max(1) || h < min_size.max(1) {
        return Err(TrainError::ImageTooSmall {
            width: w,
            height: h,
            patch: min_size,
        });
    }
    Ok(TrainingPair {
        input: pair.input.resize_bilinear(w, h)?,
        target: pair.target.resize_bilinear(w, h)?,
    })
}

/// `count` uniformly random aligned crops. Pairs are chosen uniformly, then
/// the crop origin uniformly over all positions; input and target always
/// share the crop window. Deterministic per seed.
pub fn sample_patches(
    pairs: &[TrainingPair],
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<PatchBatch, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_patches(pairs, patch, count, None, &mut rng)
}

pub(crate) fn draw_patches(
    pairs: &[TrainingPair],
    patch: usize,
    count: usize,
    resize: Option<(f64, f64)>,
    rng: &mut ChaCha8Rng,
) -> Result<PatchBatch, TrainError> {
    let first = pairs.first().ok_or(TrainError::EmptyDataset)?;
    let channels = first.input.channels();
    if patch == 0 || count == 0 {
        return Err(TrainError::Config("patch size and count must be positive".into()));
    }
    for p in pairs {
        if p.input.channels() != channels {
            return Err(TrainError::Config("pairs differ in channel count".into()));
        }
        if p.width() < patch || p.height() < patch {
            return Err(TrainError::ImageTooSmall {
                width: p.width(),
                height: p.height(),
                patch,
            });
        }
    }
    let plane = patch * patch * channels;
    let mut inputs = Vec::with_capacity(count * plane);
    let mut targets = Vec::with_capacity(count * plane);
    let mut origins = Vec::with_capacity(count);
    for _ in 0..count {
        let index = rng.random_range(0..pairs.len());
        let resized;
        let pair = match resize {
            Some((lo, hi)) => {
                let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                resized = augment_resize(&pairs[index], scale, patch)?;
                &resized
            }
            None => &pairs[index],
        };
        let x = rng.random_range(0..=pair.width() - patch);
        let y = rng.random_range(0..=pair.height() - patch);
        inputs.extend(pair.input.crop(x, y, patch, patch)?.into_pixels());
        targets.extend(pair.target.crop(x, y, patch, patch)?.into_pixels());
        origins.push(PatchOrigin {
            pair: index,
            x,
            y,
            source_width: pair.width(),
            source_height: pair.height(),
        });
    }
    let shape = [count, channels, patch, patch];
    Ok(PatchBatch {
        inputs: Tensor::from_vec(&shape, inputs)?,
        targets: Tensor::from_vec(&shape, targets)?,
        origins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(w: usize, h: usize) -> TrainingPair {
        let input = ImageFrame::from_fn(w, h, |x, y| ((x * 31 + y * 17) % 97) as f32 / 97.0);
        let target = ImageFrame::from_fn(w, h, |x, y| ((x * 13 + y * 7) % 89) as f32 / 89.0);
        TrainingPair::new(input, target).unwrap()
    }

    #[test]
    fn exact_size_image_has_one_crop() {
        let p = pair(8, 8);
        let b = sample_patches(std::slice::from_ref(&p), 8, 5, 1).unwrap();
        assert!(b.origins.iter().all(|o| (o.x, o.y) == (0, 0)));
        for s in 0..5 {
            assert_eq!(&b.inputs.data()[s * 64..(s + 1) * 64], p.input.pixels());
        }
    }

    #[test]
    fn input_and_target_share_the_window() {
        let mut p = pair(30, 20);
        // plant a marker at the same spot in both frames
        p.input.set(0, 17, 11, 5.0);
        p.target.set(0, 17, 11, -5.0);
        let b = sample_patches(&[p], 6, 400, 2).unwrap();
        let mut hits = 0;
        for s in 0..400 {
            let i = &b.inputs.data()[s * 36..(s + 1) * 36];
            let t = &b.targets.data()[s * 36..(s + 1) * 36];
            let pi = i.iter().position(|&v| v == 5.0);
            let pt = t.iter().position(|&v| v == -5.0);
            assert_eq!(pi, pt);
            hits += pi.is_some() as usize;
        }
        assert!(hits > 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let ps = [pair(20, 20), pair(25, 22)];
        let a = sample_patches(&ps, 7, 10, 3).unwrap();
        let b = sample_patches(&ps, 7, 10, 3).unwrap();
        let c = sample_patches(&ps, 7, 10, 4).unwrap();
        assert_eq!(a.origins, b.origins);
        assert_eq!(a.inputs, b.inputs);
        assert_ne!(a.origins, c.origins);
    }

    #[test]
    fn too_small_image_is_an_error() {
        assert!(matches!(
            sample_patches(&[pair(5, 9)], 6, 1, 0),
            Err(TrainError::ImageTooSmall { .. })
        ));
        assert!(matches!(sample_patches(&[], 6, 1, 0), Err(TrainError::EmptyDataset)));
    }

    #[test]
    fn resize_augmentation() {
        let p = pair(100, 100);
        assert_eq!(augment_resize(&p, 1.0, 10).unwrap(), p);
        let half = augment_resize(&p, 0.5, 10).unwrap();
        assert_eq!((half.width(), half.height()), (50, 50));
        assert!(matches!(augment_resize(&p, 0.5, 60), Err(TrainError::ImageTooSmall { .. })));
        let c = TrainingPair::new(ImageFrame::filled(40, 30, 1, 0.7), ImageFrame::filled(40, 30, 1, 0.2)).unwrap();
        for s in [0.7, 0.83, 1.0] {
            let r = augment_resize(&c, s, 1).unwrap();
            assert!(r.input.pixels().iter().all(|&v| (v - 0.7).abs() < 1e-6));
            assert!(r.target.pixels().iter().all(|&v| (v - 0.2).abs() < 1e-6));
        }
    }
}
