use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Image;
use crate::error::{Error, Result};

/// Blur sigma at severity 1, in pixels.
pub const BLUR_SIGMA_MAX: f64 = 4.0;
/// Noise standard deviation at severity 1.
pub const NOISE_STD_MAX: f64 = 0.25;
/// Quantization levels per block at severity 0 are `BLOCK_LEVELS_MAX + 1`.
pub const BLOCK_LEVELS_MAX: f64 = 31.0;
pub const BLOCK_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistortionKind {
    GaussianBlur,
    Awgn,
    ContrastDecrement,
    BlockQuantization,
}

impl DistortionKind {
    pub const ALL: [DistortionKind; 4] = [
        DistortionKind::GaussianBlur,
        DistortionKind::Awgn,
        DistortionKind::ContrastDecrement,
        DistortionKind::BlockQuantization,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DistortionKind::GaussianBlur => "gaussian_blur",
            DistortionKind::Awgn => "awgn",
            DistortionKind::ContrastDecrement => "contrast_decrement",
            DistortionKind::BlockQuantization => "block_quantization",
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistortionKind {
    type Err = Error;

    /// Accepts the canonical names and the short forms `blur`, `noise`,
    /// `contrast` and `block`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian_blur" | "blur" => DistortionKind::GaussianBlur,
            "awgn" | "noise" => DistortionKind::Awgn,
            "contrast_decrement" | "contrast" => DistortionKind::ContrastDecrement,
            "block_quantization" | "block" => DistortionKind::BlockQuantization,
            other => return Err(Error::InvalidParameter(format!("unknown distortion kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub severity: f64,
    /// Only the noise kind is stochastic.
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, severity: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&severity) {
            return Err(Error::InvalidParameter(format!("severity {severity} outside [0, 1]")));
        }
        Ok(DistortionSpec { kind, severity, seed })
    }
}

/// Severity 0 returns the input unchanged for every kind.
pub fn apply_distortion(img: &Image, spec: &DistortionSpec) -> Result<Image> {
    let s = spec.severity;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!("severity {s} outside [0, 1]")));
    }
    if s == 0.0 {
        return Ok(img.clone());
    }
    let mut out = img.clone();
    match spec.kind {
        DistortionKind::GaussianBlur => {
            let kernel = gaussian_kernel(s * BLUR_SIGMA_MAX);
            let (w, h) = (img.width(), img.height());
            for plane in out.planes_mut() {
                blur_plane(plane, w, h, &kernel);
            }
        }
        DistortionKind::Awgn => {
            let normal = Normal::new(0.0, s * NOISE_STD_MAX).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            for plane in out.planes_mut() {
                for v in plane {
                    *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
        }
        DistortionKind::ContrastDecrement => {
            for plane in out.planes_mut() {
                for v in plane {
                    *v = 0.5 + (1.0 - s) * (*v - 0.5);
                }
            }
        }
        DistortionKind::BlockQuantization => {
            let levels = ((1.0 - s) * BLOCK_LEVELS_MAX).ceil() as usize + 1;
            let (w, h) = (img.width(), img.height());
            for plane in out.planes_mut() {
                quantize_blocks(plane, w, h, levels);
            }
        }
    }
    Ok(out)
}

/// Normalized kernel truncated at three sigma.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Mirror index without repeating the edge sample (`-1 -> 1`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

fn blur_plane(plane: &mut [f64], w: usize, h: usize, kernel: &[f64]) {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            tmp[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * row[reflect(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    for y in 0..h {
        for x in 0..w {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[reflect(y as isize + k as isize - r, h) * w + x])
                .sum();
            plane[y * w + x] = v.clamp(0.0, 1.0);
        }
    }
}

/// Each 8x8 block (partial at the borders) is snapped to a grid of `levels`
/// values per unit range, step `1 / (levels - 1)`, anchored at the block
/// mean. Neighbouring blocks get different grids, which produces both
/// banding and block edges; a single level leaves only the block mean.
fn quantize_blocks(plane: &mut [f64], w: usize, h: usize, levels: usize) {
    let step = if levels > 1 { 1.0 / (levels - 1) as f64 } else { f64::INFINITY };
    for by in (0..h).step_by(BLOCK_SIZE) {
        for bx in (0..w).step_by(BLOCK_SIZE) {
            let ys = by..(by + BLOCK_SIZE).min(h);
            let xs = bx..(bx + BLOCK_SIZE).min(w);
            let idx = || ys.clone().flat_map(|y| xs.clone().map(move |x| y * w + x));
            let (sum, n) = idx().fold((0.0, 0.0), |(s, n), i| (s + plane[i], n + 1.0));
            let mean = sum / n;
            for i in idx() {
                let q = if levels > 1 { ((plane[i] - mean) / step).round() * step } else { 0.0 };
                plane[i] = (mean + q).clamp(0.0, 1.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::sources::{render, SourceKind};

    fn sample() -> Image {
        render(SourceKind::Mixed, 40, 3)
    }

    #[test]
    fn severity_zero_is_identity() {
        let img = sample();
        for kind in DistortionKind::ALL {
            let out = apply_distortion(&img, &DistortionSpec::new(kind, 0.0, 9).unwrap()).unwrap();
            assert!(out.data().iter().zip(img.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn full_contrast_decrement_is_grey() {
        let spec = DistortionSpec::new(DistortionKind::ContrastDecrement, 1.0, 0).unwrap();
        let out = apply_distortion(&sample(), &spec).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn noise_std_matches_severity() {
        let flat = Image::filled(100, 100, 1, 0.5).unwrap();
        let spec = DistortionSpec::new(DistortionKind::Awgn, 0.4, 17).unwrap();
        let out = apply_distortion(&flat, &spec).unwrap();
        let d = out.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        assert!((std / 0.1 - 1.0).abs() < 0.1, "{std}");
    }

    #[test]
    fn blur_preserves_constant_and_smooths_edges() {
        let flat = Image::filled(20, 12, 3, 0.3).unwrap();
        let spec = DistortionSpec::new(DistortionKind::GaussianBlur, 0.5, 0).unwrap();
        let out = apply_distortion(&flat, &spec).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-12));

        let step: Vec<f64> = (0..16 * 16).map(|i| if i % 16 < 8 { 0.0 } else { 1.0 }).collect();
        let img = Image::new(16, 16, 1, step).unwrap();
        let out = apply_distortion(&img, &spec).unwrap();
        let row = &out.data()[..16];
        assert!(row.windows(2).all(|p| p[0] <= p[1] + 1e-15));
        assert!(row[7] > 0.0 && row[8] < 1.0);
    }

    #[test]
    fn reflect_padding() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(12, 5), 4);
        assert_eq!(reflect(3, 1), 0);
    }

    #[test]
    fn block_quantization_levels() {
        // One 8x8 block holding a ramp over [0.25, 0.75] with mean 0.5.
        let ramp: Vec<f64> = (0..64).map(|i| 0.25 + 0.5 * i as f64 / 63.0).collect();
        let img = Image::new(8, 8, 1, ramp).unwrap();
        // s = 0.8: ceil(0.2 * 31) + 1 = 8 levels, step 1/7 around the mean.
        let spec = DistortionSpec::new(DistortionKind::BlockQuantization, 0.8, 0).unwrap();
        let out = apply_distortion(&img, &spec).unwrap();
        let mut values = out.data().to_vec();
        values.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let expected: Vec<f64> = (-2..=2).map(|k| 0.5 + k as f64 / 7.0).collect();
        assert_eq!(values.len(), expected.len());
        for (v, e) in values.iter().zip(&expected) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
        let spec = DistortionSpec::new(DistortionKind::BlockQuantization, 1.0, 0).unwrap();
        let out = apply_distortion(&img, &spec).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn block_quantization_error_bounded_by_half_step() {
        let img = sample();
        for s in [0.2, 0.5, 0.8] {
            let levels = ((1.0 - s) * BLOCK_LEVELS_MAX).ceil() + 1.0;
            let spec = DistortionSpec::new(DistortionKind::BlockQuantization, s, 0).unwrap();
            let out = apply_distortion(&img, &spec).unwrap();
            let worst = out.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 0.5 / (levels - 1.0) + 1e-12, "{s}: {worst}");
        }
    }

    #[test]
    fn kind_names() {
        for k in DistortionKind::ALL {
            assert_eq!(k.as_str().parse::<DistortionKind>().unwrap(), k);
        }
        assert_eq!("blur".parse::<DistortionKind>().unwrap(), DistortionKind::GaussianBlur);
        assert!("jpeg".parse::<DistortionKind>().is_err());
        assert!(DistortionSpec::new(DistortionKind::Awgn, 1.2, 0).is_err());
    }
}
