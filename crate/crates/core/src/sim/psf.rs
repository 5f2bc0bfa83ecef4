use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;

/// A square, odd-sized, non-negative blur kernel with unit sum, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    size: usize,
    kernel: Vec<f64>,
}

impl Psf {
    /// Normalizes `values` to unit sum. Rejects even sizes, negative or
    /// non-finite entries and all-zero kernels.
    pub fn new(size: usize, values: Vec<f64>) -> Result<Self, SimError> {
        if size == 0 || size % 2 == 0 {
            return Err(SimError::Psf(format!("kernel size must be odd, got {size}")));
        }
        if values.len() != size * size {
            return Err(SimError::Psf(format!(
                "{size}x{size} kernel needs {} values, got {}",
                size * size,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimError::Psf("kernel entries must be finite and non-negative".into()));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(SimError::Psf("kernel has no mass".into()));
        }
        Ok(Psf {
            size,
            kernel: values.into_iter().map(|v| v / sum).collect(),
        })
    }

    /// The identity kernel of the given odd size.
    pub fn delta(size: usize) -> Result<Self, SimError> {
        let mut v = vec![0.0; size * size];
        if let Some(c) = v.get_mut(size * size / 2) {
            *c = 1.0;
        }
        Psf::new(size, v)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.kernel[row * self.size + col]
    }

    /// Mass-weighted mean offset `(dx, dy)` from the kernel centre.
    pub fn centroid(&self) -> (f64, f64) {
        let r = self.radius() as f64;
        let mut c = (0.0, 0.0);
        for (i, &k) in self.kernel.iter().enumerate() {
            c.0 += k * ((i % self.size) as f64 - r);
            c.1 += k * ((i / self.size) as f64 - r);
        }
        c
    }
}

/// `count` synthetic turbulence-like kernels: each is a mixture of 2 to 4
/// anisotropic Gaussian lobes with random offsets, covariances and weights.
/// The lobe offsets are shifted so the mixture's centroid sits on the kernel
/// centre; spatial displacement then comes from the lobe spread alone.
pub fn generate_psf_bank(count: usize, size: usize, seed: u64) -> Result<Vec<Psf>, SimError> {
    if size < 3 || size % 2 == 0 {
        return Err(SimError::Psf(format!("bank kernel size must be odd and >= 3, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = (size / 2) as f64;
    (0..count)
        .map(|_| {
            let lobes = rng.random_range(2..=4);
            let mut params: Vec<[f64; 6]> = (0..lobes)
                .map(|_| {
                    let rho = r * 0.15 * rng.random::<f64>().sqrt();
                    let phi = rng.random_range(0.0..2.0 * PI);
                    let major = r * rng.random_range(0.1..0.28);
                    let minor = major * rng.random_range(0.35..1.0);
                    let theta = rng.random_range(0.0..PI);
                    let weight = rng.random_range(0.2..1.0);
                    [rho * phi.cos(), rho * phi.sin(), major, minor, theta, weight]
                })
                .collect();
            let total: f64 = params.iter().map(|p| p[5]).sum();
            let mx = params.iter().map(|p| p[0] * p[5]).sum::<f64>() / total;
            let my = params.iter().map(|p| p[1] * p[5]).sum::<f64>() / total;
            for p in &mut params {
                p[0] -= mx;
                p[1] -= my;
            }
            let mut values = vec![0.0; size * size];
            for [cx, cy, major, minor, theta, weight] in params {
                let (s, c) = theta.sin_cos();
                let norm = weight / (2.0 * PI * major * minor);
                for (i, v) in values.iter_mut().enumerate() {
                    let dx = (i % size) as f64 - r - cx;
                    let dy = (i / size) as f64 - r - cy;
                    let u = (c * dx + s * dy) / major;
                    let w = (-s * dx + c * dy) / minor;
                    *v += norm * (-0.5 * (u * u + w * w)).exp();
                }
            }
            Psf::new(size, values)
        })
        .collect()
}

/// Bilinear rescale about the kernel centre: the output has
/// `round(size * scale)` taps per side (bumped to the next odd number) and
/// output tap `i` samples the source at `(i - c_out) / scale + c_src`.
/// Samples outside the source are zero. The result is renormalized.
pub fn resize_psf(psf: &Psf, scale: f64) -> Result<Psf, SimError> {
    if !(scale > 0.0 && scale <= 4.0) {
        return Err(SimError::Psf(format!("PSF scale must be in (0, 4], got {scale}")));
    }
    let raw = (psf.size as f64 * scale).round() as usize;
    if raw < 1 {
        return Err(SimError::Psf(format!(
            "{}x{} kernel at scale {scale} has no taps",
            psf.size, psf.size
        )));
    }
    if scale == 1.0 {
        return Psf::new(psf.size, psf.kernel.clone());
    }
    let size = raw | 1;
    let (c_in, c_out) = (psf.radius() as f64, (size / 2) as f64);
    let sample = |sy: f64, sx: f64| -> f64 {
        let (y0, x0) = (sy.floor(), sx.floor());
        let (fy, fx) = (sy - y0, sx - x0);
        let tap = |y: f64, x: f64| {
            if y < 0.0 || x < 0.0 || y >= psf.size as f64 || x >= psf.size as f64 {
                0.0
            } else {
                psf.at(y as usize, x as usize)
            }
        };
        (1.0 - fy) * ((1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1.0))
            + fy * ((1.0 - fx) * tap(y0 + 1.0, x0) + fx * tap(y0 + 1.0, x0 + 1.0))
    };
    let mut values = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let sy = (i as f64 - c_out) / scale + c_in;
            let sx = (j as f64 - c_out) / scale + c_in;
            values.push(sample(sy, sx));
        }
    }
    Psf::new(size, values).map_err(|_| SimError::Psf(format!("kernel vanished when resized by {scale}")))
}

/// Parses `PSF <size>` followed by `size*size` whitespace-separated reals.
/// Lines starting with `#` are ignored. The kernel is normalized on load.
pub fn parse_psf(text: &str) -> Result<Psf, SimError> {
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("PSF") {
        return Err(SimError::Psf("missing `PSF <size>` header".into()));
    }
    let size: usize = tokens
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| SimError::Psf("header size is not a positive integer".into()))?;
    let values = tokens
        .map(|t| t.parse::<f64>().map_err(|_| SimError::Psf(format!("`{t}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    Psf::new(size, values)
}

pub fn format_psf(psf: &Psf) -> String {
    let mut s = format!("PSF {}\n", psf.size);
    for row in psf.kernel.chunks(psf.size) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn load_psf(path: impl AsRef<Path>) -> Result<Psf, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(path.display().to_string(), e))?;
    parse_psf(&text).map_err(|e| SimError::Psf(format!("{}: {e}", path.display())))
}

pub fn save_psf(psf: &Psf, path: impl AsRef<Path>) -> Result<(), SimError> {
    let path = path.as_ref();
    std::fs::write(path, format_psf(psf)).map_err(|e| SimError::Io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum(p: &Psf) -> f64 {
        p.kernel().iter().sum()
    }

    #[test]
    fn bank_kernels_are_normalized_and_distinct() {
        let bank = generate_psf_bank(9, 15, 3).unwrap();
        assert_eq!(bank.len(), 9);
        for p in &bank {
            assert_eq!(p.size(), 15);
            assert!((sum(p) - 1.0).abs() < 1e-9);
            assert!(p.kernel().iter().all(|&v| v >= 0.0));
            let (cx, cy) = p.centroid();
            assert!(cx.abs() < 0.3 && cy.abs() < 0.3, "centroid {cx},{cy}");
        }
        for i in 0..9 {
            for j in i + 1..9 {
                let d: f64 = bank[i]
                    .kernel()
                    .iter()
                    .zip(bank[j].kernel())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                assert!(d > 0.0);
            }
        }
        assert_eq!(bank, generate_psf_bank(9, 15, 3).unwrap());
        assert!(generate_psf_bank(9, 14, 3).is_err());
    }

    #[test]
    fn resize_keeps_unit_sum() {
        let bank = generate_psf_bank(4, 15, 1).unwrap();
        for p in &bank {
            let same = resize_psf(p, 1.0).unwrap();
            let drift = same
                .kernel()
                .iter()
                .zip(p.kernel())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(drift <= 1e-12);
            for s in [0.5, 0.73, 1.5, 2.2, 4.0] {
                let r = resize_psf(p, s).unwrap();
                assert_eq!(r.size() % 2, 1);
                assert!((sum(&r) - 1.0).abs() < 1e-9);
            }
        }
        assert_eq!(resize_psf(&bank[0], 1.5).unwrap().size(), 23);
        assert_eq!(resize_psf(&bank[0], 0.5).unwrap().size(), 9);
        assert!(resize_psf(&bank[0], 0.0).is_err());
        assert!(resize_psf(&bank[0], 4.5).is_err());
        assert!(resize_psf(&Psf::delta(1).unwrap(), 0.2).is_err());
    }

    #[test]
    fn resized_delta_peaks_at_centre() {
        let d = Psf::delta(7).unwrap();
        for s in [1.0, 1.3, 2.0, 3.7] {
            let r = resize_psf(&d, s).unwrap();
            let c = r.size() * r.size() / 2;
            let max = r.kernel().iter().cloned().fold(0.0, f64::max);
            assert_eq!(r.kernel()[c], max);
        }
    }

    #[test]
    fn text_round_trip() {
        let p = generate_psf_bank(1, 5, 9).unwrap().remove(0);
        assert_eq!(parse_psf(&format_psf(&p)).unwrap(), p);
        let q = parse_psf("# comment\nPSF 3\n0 1 0\n1 4 1\n0 1 0\n").unwrap();
        assert_eq!(q.at(1, 1), 0.5);
        assert!(parse_psf("PSF 3\n1 2 3").is_err());
        assert!(parse_psf("PSF 2\n1 1 1 1").is_err());
        assert!(parse_psf("KERNEL 1\n1").is_err());
        assert!(parse_psf("PSF 1\n-1").is_err());
    }
}
