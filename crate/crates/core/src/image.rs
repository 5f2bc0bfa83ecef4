//! In-memory frames. Pixels are planar (`[C, H, W]`), nominally in `[0, 1]`;
//! intermediate results may leave that range and are only clamped on export.

use thiserror::Error;

use crate::tensor::{Real, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("{width}x{height}x{channels} frame needs {expected} pixels, got {found}")]
    PixelCount {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        found: usize,
    },
    #[error("frames must have 1 or 3 channels (got {0})")]
    Channels(usize),
    #[error("frame size mismatch: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl ImageFrame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Result<Self, ImageError> {
        Self::with_channels(width, height, channels, pixels).and_then(|f| {
            if channels == 1 || channels == 3 {
                Ok(f)
            } else {
                Err(ImageError::Channels(channels))
            }
        })
    }

    /// Like [`ImageFrame::new`] without the 1-or-3 channel restriction, for
    /// stacked network inputs.
    pub(crate) fn with_channels(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f32>,
    ) -> Result<Self, ImageError> {
        let expected = width * height * channels;
        if expected == 0 || pixels.len() != expected {
            return Err(ImageError::PixelCount {
                width,
                height,
                channels,
                expected,
                found: pixels.len(),
            });
        }
        Ok(ImageFrame {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        ImageFrame {
            width,
            height,
            channels,
            pixels: vec![value; width * height * channels],
        }
    }

    /// Builds a grayscale frame from `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        ImageFrame {
            width,
            height,
            channels: 1,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(width, height, channels)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.pixels[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.pixels[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.pixels[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_dims(&self, other: &ImageFrame) -> Result<(), ImageError> {
        if self.dims() != other.dims() {
            return Err(ImageError::SizeMismatch(self.dims(), other.dims()));
        }
        Ok(())
    }

    /// Single channel `c` as its own frame.
    pub fn channel(&self, c: usize) -> ImageFrame {
        ImageFrame {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels: self.plane(c).to_vec(),
        }
    }

    /// Concatenates the channels of equally sized frames.
    pub fn stack(frames: &[&ImageFrame]) -> Result<ImageFrame, ImageError> {
        let first = frames
            .first()
            .ok_or_else(|| ImageError::Invalid("cannot stack zero frames".into()))?;
        let mut pixels = Vec::new();
        let mut channels = 0;
        for f in frames {
            if (f.width, f.height) != (first.width, first.height) {
                return Err(ImageError::SizeMismatch(first.dims(), f.dims()));
            }
            pixels.extend_from_slice(&f.pixels);
            channels += f.channels;
        }
        Self::with_channels(first.width, first.height, channels, pixels)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<ImageFrame, ImageError> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(ImageError::Invalid(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{} frame",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(width * height * self.channels);
        for c in 0..self.channels {
            let p = self.plane(c);
            for y in y0..y0 + height {
                pixels.extend_from_slice(&p[y * self.width + x0..y * self.width + x0 + width]);
            }
        }
        Ok(ImageFrame {
            width,
            height,
            channels: self.channels,
            pixels,
        })
    }

    pub fn flip_horizontal(&self) -> ImageFrame {
        let mut out = self.clone();
        for c in 0..self.channels {
            let plane = out.plane_mut(c);
            for row in plane.chunks_mut(self.width) {
                row.reverse();
            }
        }
        out
    }

    /// Bilinear resampling with pixel-center alignment and edge clamping.
    /// Constant frames stay constant at any size.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<ImageFrame, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Invalid(format!("cannot resize to {width}x{height}")));
        }
        if (width, height) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
            let scale = inp as f64 / out as f64;
            (0..out)
                .map(|i| {
                    let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                    let i0 = s.floor() as usize;
                    let i1 = (i0 + 1).min(inp - 1);
                    (i0, i1, (s - i0 as f64) as f32)
                })
                .collect()
        };
        let xs = axis(width, self.width);
        let ys = axis(height, self.height);
        let mut pixels = Vec::with_capacity(width * height * self.channels);
        for c in 0..self.channels {
            let p = self.plane(c);
            for &(y0, y1, fy) in &ys {
                let r0 = &p[y0 * self.width..(y0 + 1) * self.width];
                let r1 = &p[y1 * self.width..(y1 + 1) * self.width];
                for &(x0, x1, fx) in &xs {
                    let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                    let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                    pixels.push(top + (bot - top) * fy);
                }
            }
        }
        Ok(ImageFrame {
            width,
            height,
            channels: self.channels,
            pixels,
        })
    }

    pub fn clamped(&self) -> ImageFrame {
        let mut out = self.clone();
        out.pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// `[1, C, H, W]` tensor view of the frame.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            &[1, self.channels, self.height, self.width],
            self.pixels.iter().map(|&v| T::from_f64(v as f64)).collect(),
        )
        .expect("frame dims are non-zero")
    }

    /// Sample `index` of an NCHW tensor.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, index: usize) -> Result<ImageFrame, ImageError> {
        let (n, c, h, w) = t.dims4().map_err(|e| ImageError::Invalid(e.to_string()))?;
        if index >= n {
            return Err(ImageError::Invalid(format!("sample {index} out of batch of {n}")));
        }
        let len = c * h * w;
        let pixels = t.data()[index * len..(index + 1) * len]
            .iter()
            .map(|v| v.as_f64() as f32)
            .collect();
        Self::with_channels(w, h, c, pixels)
    }
}

/// Equally sized frames of one scene, in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<ImageFrame>,
}

impl FrameSequence {
    pub fn new(frames: Vec<ImageFrame>) -> Result<Self, ImageError> {
        if let Some(first) = frames.first() {
            for f in &frames[1..] {
                first.same_dims(f)?;
            }
        }
        Ok(FrameSequence { frames })
    }

    pub fn frames(&self) -> &[ImageFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<ImageFrame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&ImageFrame> {
        self.frames.get(t)
    }
}

impl std::ops::Index<usize> for FrameSequence {
    type Output = ImageFrame;
    fn index(&self, t: usize) -> &ImageFrame {
        &self.frames[t]
    }
}
