//! Procedural stand-ins for pristine reference photographs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Image;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    /// Multi-octave value noise over a colour gradient.
    Texture,
    /// Flat-shaded rectangles and discs over a smooth background.
    Shapes,
    /// Shapes over a textured background.
    Mixed,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::Texture, SourceKind::Shapes, SourceKind::Mixed];

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceKind::Texture => "texture",
            SourceKind::Shapes => "shapes",
            SourceKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown source kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Procedural { seed: u64, kind: SourceKind },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceImage {
    pub id: String,
    pub image: Image,
    pub origin: Origin,
}

pub fn source_id(index: usize) -> String {
    format!("s{index:03}")
}

/// `count` square RGB images of side `size`, quantized to 8 bits. Image `i`
/// draws from `derive_seed(seed, [i])` and cycles through the source kinds.
pub fn generate_sources(count: usize, size: usize, patch_size: usize, seed: u64) -> Result<Vec<SourceImage>> {
    if count == 0 {
        return Err(Error::InvalidParameter("need at least one source".into()));
    }
    if size < patch_size || size < 2 {
        return Err(Error::InvalidParameter(format!(
            "source size {size} is smaller than the {patch_size}-pixel patch"
        )));
    }
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, &[i as u64]);
            let kind = SourceKind::ALL[i % SourceKind::ALL.len()];
            SourceImage {
                id: source_id(i),
                image: render(kind, size, s),
                origin: Origin::Procedural { seed: s, kind },
            }
        })
        .collect())
}

pub fn render(kind: SourceKind, size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size * size;
    let mut data = vec![0.0; 3 * n];
    let background = gradient(&mut rng, size);
    for (c, plane) in data.chunks_exact_mut(n).enumerate() {
        plane.copy_from_slice(&background[c]);
    }
    if kind != SourceKind::Shapes {
        let weight = if kind == SourceKind::Texture { 0.8 } else { 0.5 };
        for plane in data.chunks_exact_mut(n) {
            let noise = value_noise(&mut rng, size, &[(16.0, 0.5), (8.0, 0.3), (4.0, 0.15), (2.0, 0.1)]);
            for (p, v) in plane.iter_mut().zip(noise) {
                *p = (1.0 - weight) * *p + weight * v;
            }
        }
    }
    if kind != SourceKind::Texture {
        let count = rng.random_range(6..14);
        for _ in 0..count {
            shape(&mut rng, size, &mut data);
        }
    }
    stretch(&mut data);
    let mut img = Image::from_raw(size, size, 3, data);
    img.quantize_8bit();
    img
}

/// Linear colour ramp in a random direction, one plane per channel.
fn gradient(rng: &mut ChaCha8Rng, size: usize) -> [Vec<f64>; 3] {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let ends: Vec<(f64, f64)> = (0..3).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let half = (size - 1) as f64 / 2.0;
    std::array::from_fn(|c| {
        let (a, b) = ends[c];
        (0..size * size)
            .map(|i| {
                let (y, x) = ((i / size) as f64 - half, (i % size) as f64 - half);
                let t = 0.5 + (x * dx + y * dy) / (2.0 * half.max(1.0) * std::f64::consts::SQRT_2);
                a + (b - a) * t
            })
            .collect()
    })
}

/// Sum of smoothly interpolated random lattices `(cell size, amplitude)`.
fn value_noise(rng: &mut ChaCha8Rng, size: usize, octaves: &[(f64, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; size * size];
    let total: f64 = octaves.iter().map(|o| o.1).sum();
    for &(cell, amp) in octaves {
        let g = (size as f64 / cell).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..g * g).map(|_| rng.random::<f64>()).collect();
        for y in 0..size {
            let fy = y as f64 / cell;
            let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for x in 0..size {
                let fx = x as f64 / cell;
                let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let at = |a: usize, b: usize| lattice[a * g + b];
                let top = at(iy, ix) + (at(iy, ix + 1) - at(iy, ix)) * tx;
                let bottom = at(iy + 1, ix) + (at(iy + 1, ix + 1) - at(iy + 1, ix)) * tx;
                out[y * size + x] += amp / total * (top + (bottom - top) * ty);
            }
        }
    }
    out
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Paints one hard-edged rectangle or disc with a random colour.
fn shape(rng: &mut ChaCha8Rng, size: usize, data: &mut [f64]) {
    let n = size * size;
    let s = size as f64;
    let colour: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
    let (cx, cy) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
    let disc = rng.random_bool(0.5);
    let (rx, ry) = (rng.random_range(0.08 * s..0.35 * s), rng.random_range(0.08 * s..0.35 * s));
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let inside = if disc {
                (px / rx).powi(2) + (py / rx).powi(2) <= 1.0
            } else {
                px.abs() <= rx && py.abs() <= ry
            };
            if inside {
                for (c, v) in colour.iter().enumerate() {
                    data[c * n + y * size + x] = *v;
                }
            }
        }
    }
}

/// Affine stretch of all channels jointly onto `[0, 1]`.
fn stretch(data: &mut [f64]) {
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        data.fill(0.5);
        return;
    }
    for v in data {
        *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0);
    }
}
