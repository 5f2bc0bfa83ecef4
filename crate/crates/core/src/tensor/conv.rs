//! Stride-1, zero same-padded 2-D cross-correlation.
//!
//! The forward and backward passes lower each band of output rows to an
//! `im2col` matrix and a single GEMM. Bands are independent, so forward work
//! is spread over the rayon pool; backward work is split per sample and the
//! per-sample weight gradients are reduced in sample order, which keeps the
//! result bitwise identical for any thread count.

use rayon::prelude::*;

use super::gemm::{gemm, Layout};
use super::{Real, Result, Tensor, TensorError};

/// Number of output pixels lowered per GEMM call (rounded to whole rows).
const BAND_PIXELS: usize = 512;

/// Geometry of one convolution layer. Stride is always 1 and padding is
/// always "same" with zero fill, so output spatial size equals input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvSpec {
    pub const STRIDE: usize = 1;

    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(TensorError::ConvSpec("channel counts must be positive".into()));
        }
        if kernel == 0 || kernel % 2 == 0 {
            return Err(TensorError::ConvSpec(format!(
                "kernel size must be odd and >= 1, got {kernel}"
            )));
        }
        Ok(ConvSpec {
            in_channels,
            out_channels,
            kernel,
        })
    }

    pub fn radius(&self) -> usize {
        self.kernel / 2
    }

    /// Length of one unrolled receptive patch, `C_in * n * n`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    fn check(&self, input: &[usize], weights: &[usize], bias: Option<&[usize]>) -> Result<()> {
        if weights != self.weight_shape() {
            let ws = self.weight_shape();
            let dims = ["out_channels", "in_channels", "kernel height", "kernel width"];
            if weights.len() != 4 {
                return Err(TensorError::Rank {
                    what: "conv weights",
                    expected: "4 ([C_out,C_in,n,n])",
                    shape: weights.to_vec(),
                });
            }
            let i = (0..4).find(|&i| weights[i] != ws[i]).unwrap_or(0);
            return Err(TensorError::Dimension {
                what: "conv weights",
                dim: dims[i],
                expected: ws[i],
                found: weights[i],
            });
        }
        if let Some(b) = bias {
            if b != [self.out_channels] {
                return Err(TensorError::Dimension {
                    what: "conv bias",
                    dim: "out_channels",
                    expected: self.out_channels,
                    found: b.iter().product(),
                });
            }
        }
        let c = match *input {
            [_, c, _, _] | [c, _, _] => c,
            _ => {
                return Err(TensorError::Rank {
                    what: "conv input",
                    expected: "3 or 4 ([C,H,W] or [N,C,H,W])",
                    shape: input.to_vec(),
                })
            }
        };
        if c != self.in_channels {
            return Err(TensorError::Dimension {
                what: "conv input",
                dim: "in_channels",
                expected: self.in_channels,
                found: c,
            });
        }
        Ok(())
    }
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    /// `None` only when the caller asked to skip the input gradient.
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn band_rows(h: usize, w: usize) -> usize {
    (BAND_PIXELS / w.max(1)).clamp(1, h.max(1))
}

fn bands(h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    let step = band_rows(h, w);
    (0..h).step_by(step).map(move |y0| (y0, (y0 + step).min(h)))
}

/// Column span `[lo, hi)` of output x for which `x + kx - r` is inside `[0, w)`.
#[inline]
fn valid_span(w: usize, r: usize, kx: usize) -> (usize, usize) {
    let lo = r.saturating_sub(kx).min(w);
    let hi = (w + r).saturating_sub(kx).min(w).max(lo);
    (lo, hi)
}

/// Unrolls rows `[y0, y1)` of one `[C, H, W]` sample into `col`, a
/// `(C*n*n) x ((y1-y0)*W)` row-major matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Real>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    n: usize,
    y0: usize,
    y1: usize,
    col: &mut [T],
) {
    let r = n / 2;
    let cols = (y1 - y0) * w;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..n {
            for kx in 0..n {
                let k = (ci * n + ky) * n + kx;
                let row = &mut col[k * cols..(k + 1) * cols];
                let (lo, hi) = valid_span(w, r, kx);
                for y in y0..y1 {
                    let dst = &mut row[(y - y0) * w..(y - y0 + 1) * w];
                    let iy = y as isize + ky as isize - r as isize;
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    if lo == hi {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    dst[..lo].fill(T::zero());
                    dst[lo..hi].copy_from_slice(&src[lo + kx - r..hi + kx - r]);
                    dst[hi..].fill(T::zero());
                }
            }
        }
    }
}

/// One `[C, H, W]` sample as `[H + 2r, W + 2r, C]` with a zero border.
fn padded_channels_last<T: Real>(x: &[T], c: usize, h: usize, w: usize, r: usize) -> Vec<T> {
    let pw = w + 2 * r;
    let mut pad = vec![T::zero(); (h + 2 * r) * pw * c];
    for ci in 0..c {
        for y in 0..h {
            let row = &x[(ci * h + y) * w..(ci * h + y + 1) * w];
            let base = ((y + r) * pw + r) * c + ci;
            for (xi, &v) in row.iter().enumerate() {
                pad[base + xi * c] = v;
            }
        }
    }
    pad
}

/// Rows `[y0, y1)` of output pixels as a `((y1-y0)*W) x (n*n*C)` matrix whose
/// row `p` is the receptive patch of pixel `p` in `(ky, kx, ci)` order.
fn im2row<T: Real>(pad: &[T], c: usize, w: usize, n: usize, y0: usize, y1: usize, out: &mut [T]) {
    let pw = w + n - 1;
    let span = n * c;
    let k = n * span;
    for y in y0..y1 {
        for x in 0..w {
            let dst = &mut out[((y - y0) * w + x) * k..][..k];
            for ky in 0..n {
                let src = ((y + ky) * pw + x) * c;
                dst[ky * span..(ky + 1) * span].copy_from_slice(&pad[src..src + span]);
            }
        }
    }
}

/// Same-padded cross-correlation of `input` (`[C_in,H,W]` or `[N,C_in,H,W]`)
/// with `weights` (`[C_out,C_in,n,n]`) plus a per-channel `bias`.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    spec.check(input.shape(), weights.shape(), Some(bias.shape()))?;
    let (batch, c, h, w) = input.dims4()?;
    let co = spec.out_channels;
    let k = spec.patch_len();
    let hw = h * w;

    let work: Vec<(usize, usize, usize)> = (0..batch)
        .flat_map(|s| bands(h, w).map(move |(y0, y1)| (s, y0, y1)))
        .collect();
    let x = input.data();
    let wdata = weights.data();
    let results: Vec<Vec<T>> = work
        .par_iter()
        .map(|&(s, y0, y1)| {
            let cols = (y1 - y0) * w;
            let mut col = vec![T::zero(); k * cols];
            im2col(&x[s * c * hw..(s + 1) * c * hw], c, h, w, spec.kernel, y0, y1, &mut col);
            let mut out = vec![T::zero(); co * cols];
            gemm(
                T::one(),
                wdata,
                Layout::row_major(co, k),
                &col,
                Layout::row_major(k, cols),
                T::zero(),
                &mut out,
                Layout::row_major(co, cols),
            );
            out
        })
        .collect();

    let mut out_shape = input.shape().to_vec();
    let ci_axis = out_shape.len() - 3;
    out_shape[ci_axis] = co;
    let mut output = Tensor::zeros(&out_shape);
    let od = output.data_mut();
    let b = bias.data();
    for (&(s, y0, y1), band) in work.iter().zip(&results) {
        let cols = (y1 - y0) * w;
        for o in 0..co {
            let dst = &mut od[(s * co + o) * hw + y0 * w..(s * co + o) * hw + y1 * w];
            for (d, &v) in dst.iter_mut().zip(&band[o * cols..(o + 1) * cols]) {
                *d = v + b[o];
            }
        }
    }
    Ok(output)
}

/// Gradients of `sum(grad_out * conv2d_forward(input, weights, bias))` with
/// respect to the input, weights and bias.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    conv2d_backward_ext(grad_out, input, weights, spec, true)
}

pub(crate) fn conv2d_backward_ext<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    spec: &ConvSpec,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    spec.check(input.shape(), weights.shape(), None)?;
    let (batch, c, h, w) = input.dims4()?;
    let co = spec.out_channels;
    let (gb, gc, gh, gw) = grad_out.dims4()?;
    for (dim, expected, found) in [
        ("batch", batch, gb),
        ("out_channels", co, gc),
        ("height", h, gh),
        ("width", w, gw),
    ] {
        if expected != found {
            return Err(TensorError::Dimension {
                what: "conv grad_out",
                dim,
                expected,
                found,
            });
        }
    }
    let k = spec.patch_len();
    let hw = h * w;
    let x = input.data();
    let g = grad_out.data();
    let wdata = weights.data();

    let per_sample: Vec<(Vec<T>, Vec<T>)> = (0..batch)
        .into_par_iter()
        .map(|s| {
            let xs = &x[s * c * hw..(s + 1) * c * hw];
            let gs = &g[s * co * hw..(s + 1) * co * hw];
            let n = spec.kernel;
            let pad = padded_channels_last(xs, c, h, w, n / 2);
            // Patch-major rows make the long reduction axis contiguous in
            // both operands; columns come out in (ky, kx, ci) order.
            let mut dw_hwc = vec![T::zero(); co * k];
            let mut col_t = Vec::new();
            for (i, (y0, y1)) in bands(h, w).enumerate() {
                let cols = (y1 - y0) * w;
                col_t.resize(k * cols, T::zero());
                im2row(&pad, c, w, n, y0, y1, &mut col_t);
                gemm(
                    T::one(),
                    &gs[y0 * w..],
                    Layout::row_major(co, cols).with_row_stride(hw),
                    &col_t,
                    Layout::row_major(cols, k),
                    if i == 0 { T::zero() } else { T::one() },
                    &mut dw_hwc,
                    Layout::row_major(co, k),
                );
            }
            let nn = n * n;
            let mut dw = vec![T::zero(); co * k];
            for o in 0..co {
                for ci in 0..c {
                    for t in 0..nn {
                        dw[o * k + ci * nn + t] = dw_hwc[o * k + t * c + ci];
                    }
                }
            }
            let db = (0..co)
                .map(|o| gs[o * hw..(o + 1) * hw].iter().copied().sum())
                .collect();
            (dw, db)
        })
        .collect();

    let mut grad_w = Tensor::zeros(&spec.weight_shape());
    let mut grad_b = Tensor::zeros(&[co]);
    for (dw, db) in per_sample {
        for (acc, v) in grad_w.data_mut().iter_mut().zip(dw) {
            *acc = *acc + v;
        }
        for (acc, v) in grad_b.data_mut().iter_mut().zip(db) {
            *acc = *acc + v;
        }
    }
    // The adjoint of a same-padded correlation is a same-padded correlation
    // with the kernel rotated by 180 degrees and its channel axes swapped.
    let grad_x = if need_input_grad {
        let n = spec.kernel;
        let nn = n * n;
        let mut rotated = vec![T::zero(); c * co * nn];
        for o in 0..co {
            for ci in 0..c {
                let src = &wdata[(o * c + ci) * nn..(o * c + ci + 1) * nn];
                let dst = &mut rotated[(ci * co + o) * nn..(ci * co + o + 1) * nn];
                for (d, &v) in dst.iter_mut().zip(src.iter().rev()) {
                    *d = v;
                }
            }
        }
        let adjoint = ConvSpec::new(co, c, n)?;
        let rotated = Tensor::from_vec(&adjoint.weight_shape(), rotated)?;
        let dx = conv2d_forward(grad_out, &rotated, &Tensor::zeros(&[c]), &adjoint)?;
        Some(dx.reshape(input.shape())?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: grad_x,
        weights: grad_w,
        bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct loop reference: out[o,y,x] = b[o] + sum w[o,c,i,j] * in[c, y+i-r, x+j-r].
    fn reference(input: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (n, c, h, wd) = input.dims4().unwrap();
        let (co, k) = (w.shape()[0], w.shape()[2]);
        let r = (k / 2) as isize;
        let mut out = Tensor::zeros(&[n, co, h, wd]);
        for s in 0..n {
            for o in 0..co {
                for y in 0..h {
                    for x in 0..wd {
                        let mut acc = b.data()[o];
                        for ci in 0..c {
                            for i in 0..k {
                                for j in 0..k {
                                    let iy = y as isize + i as isize - r;
                                    let ix = x as isize + j as isize - r;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += w.data()[((o * c + ci) * k + i) * k + j]
                                        * input.data()
                                            [((s * c + ci) * h + iy as usize) * wd + ix as usize];
                                }
                            }
                        }
                        out.data_mut()[((s * co + o) * h + y) * wd + x] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_1x1_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random(&[1, 6, 5], &mut rng);
        let spec = ConvSpec::new(1, 1, 1).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let out = conv2d_forward(&input, &w, &b, &spec).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn delta_kernel_is_exact_identity_including_borders() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = random(&[1, 4, 7], &mut rng);
        let spec = ConvSpec::new(1, 1, 3).unwrap();
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let out = conv2d_forward(&input, &w, &Tensor::zeros(&[1]), &spec).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn matches_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random(&[1, 1, 4, 4], &mut rng);
        let w = random(&[2, 1, 3, 3], &mut rng);
        let b = random(&[2], &mut rng);
        let spec = ConvSpec::new(1, 2, 3).unwrap();
        let out = conv2d_forward(&input, &w, &b, &spec).unwrap();
        let want = reference(&input, &w, &b);
        assert!(out.max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn multi_band_and_kernel_wider_than_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // 300 rows of width 20 spans two bands; 7x7 kernel on a 3-wide strip
        // exercises fully clipped taps.
        for (shape, k) in [([2, 3, 300, 20], 5), ([1, 2, 5, 3], 7), ([1, 1, 2, 1], 5)] {
            let input = random(&shape, &mut rng);
            let w = random(&[4, shape[1], k, k], &mut rng);
            let b = random(&[4], &mut rng);
            let spec = ConvSpec::new(shape[1], 4, k).unwrap();
            let out = conv2d_forward(&input, &w, &b, &spec).unwrap();
            assert!(out.max_abs_diff(&reference(&input, &w, &b)).unwrap() < 1e-11);
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random(&[2, 2, 5, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let spec = ConvSpec::new(2, 3, 3).unwrap();
        let g = conv2d_backward(&Tensor::zeros(&[2, 3, 5, 5]), &input, &w, &spec).unwrap();
        assert!(g.input.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_kernel_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random(&[1, 1, 4, 6], &mut rng);
        let go = random(&[1, 1, 4, 6], &mut rng);
        let wv = 0.75;
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![wv]).unwrap();
        let spec = ConvSpec::new(1, 1, 1).unwrap();
        let g = conv2d_backward(&go, &input, &w, &spec).unwrap();
        let gi = g.input.unwrap();
        for (a, b) in gi.data().iter().zip(go.data()) {
            assert!((a - wv * b).abs() < 1e-15);
        }
        let dot: f64 = input.data().iter().zip(go.data()).map(|(a, b)| a * b).sum();
        assert!((g.weights.data()[0] - dot).abs() < 1e-12);
        assert!((g.bias.data()[0] - go.sum()).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = ConvSpec::new(2, 3, 3).unwrap();
        let input = random(&[2, 2, 5, 4], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let go = random(&[2, 3, 5, 4], &mut rng);
        let objective = |i: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
            let out = conv2d_forward(i, w, b, &spec).unwrap();
            out.data().iter().zip(go.data()).map(|(a, g)| a * g).sum()
        };
        let grads = conv2d_backward(&go, &input, &w, &spec).unwrap();
        let h = 1e-6;
        let check = |analytic: &[f64], which: usize| {
            for idx in 0..analytic.len() {
                let (mut i1, mut w1, mut b1) = (input.clone(), w.clone(), b.clone());
                let (mut i2, mut w2, mut b2) = (input.clone(), w.clone(), b.clone());
                match which {
                    0 => {
                        i1.data_mut()[idx] += h;
                        i2.data_mut()[idx] -= h;
                    }
                    1 => {
                        w1.data_mut()[idx] += h;
                        w2.data_mut()[idx] -= h;
                    }
                    _ => {
                        b1.data_mut()[idx] += h;
                        b2.data_mut()[idx] -= h;
                    }
                }
                let fd = (objective(&i1, &w1, &b1) - objective(&i2, &w2, &b2)) / (2.0 * h);
                let a = analytic[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-6, "param {which}[{idx}]: analytic {a} vs fd {fd}");
            }
        };
        check(grads.input.as_ref().unwrap().data(), 0);
        check(grads.weights.data(), 1);
        check(grads.bias.data(), 2);
    }

    #[test]
    fn backward_matches_loop_reference_across_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (shape, k) in [([2, 3, 40, 30], 5), ([1, 2, 5, 3], 7), ([3, 1, 1, 700], 3)] {
            let [n, c, h, wd] = shape;
            let co = 2;
            let spec = ConvSpec::new(c, co, k).unwrap();
            let input = random(&shape, &mut rng);
            let w = random(&[co, c, k, k], &mut rng);
            let go = random(&[n, co, h, wd], &mut rng);
            let grads = conv2d_backward(&go, &input, &w, &spec).unwrap();
            let r = (k / 2) as isize;
            let at = |t: &Tensor<f64>, ch: usize, cc: usize, s: usize, y: isize, x: isize| {
                if y < 0 || x < 0 || y >= h as isize || x >= wd as isize {
                    0.0
                } else {
                    t.data()[((s * ch + cc) * h + y as usize) * wd + x as usize]
                }
            };
            let mut worst = 0.0f64;
            for o in 0..co {
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut acc = 0.0;
                            for s in 0..n {
                                for y in 0..h as isize {
                                    for x in 0..wd as isize {
                                        acc += at(&go, co, o, s, y, x)
                                            * at(&input, c, ci, s, y + ky as isize - r, x + kx as isize - r);
                                    }
                                }
                            }
                            let got = grads.weights.data()[((o * c + ci) * k + ky) * k + kx];
                            worst = worst.max((got - acc).abs());
                        }
                    }
                }
            }
            assert!(worst < 1e-10, "{shape:?} k{k}: {worst}");
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let spec = ConvSpec::new(2, 3, 3).unwrap();
        let input = Tensor::<f32>::zeros(&[1, 1, 4, 4]);
        let err = conv2d_forward(&input, &Tensor::zeros(&[3, 2, 3, 3]), &Tensor::zeros(&[3]), &spec)
            .unwrap_err();
        assert!(err.to_string().contains("in_channels"), "{err}");
        let err = conv2d_forward(
            &Tensor::<f32>::zeros(&[1, 2, 4, 4]),
            &Tensor::zeros(&[3, 2, 5, 5]),
            &Tensor::zeros(&[3]),
            &spec,
        )
        .unwrap_err();
        assert!(err.to_string().contains("kernel height"), "{err}");
        assert!(ConvSpec::new(1, 1, 4).is_err());
        assert!(ConvSpec::new(1, 1, 0).is_err());
    }
}
