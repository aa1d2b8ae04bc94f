use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchMode {
    /// `count` uniformly drawn top-left corners, with replacement.
    Random { count: usize, seed: u64 },
    /// Regular grid, plus a final row/column flush with the far edges.
    Grid { stride: usize },
}

/// Top-left corner of a square crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatchOffset {
    pub x: usize,
    pub y: usize,
}

fn grid_axis(len: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = len - size;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

pub fn extract_patches(img: &Image, mode: PatchMode, size: usize) -> Result<Vec<PatchOffset>> {
    let (w, h) = (img.width(), img.height());
    if size == 0 || size > w || size > h {
        return Err(Error::InvalidParameter(format!(
            "{size}-pixel patch does not fit a {w}x{h} image"
        )));
    }
    match mode {
        PatchMode::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count)
                .map(|_| PatchOffset {
                    x: rng.random_range(0..=w - size),
                    y: rng.random_range(0..=h - size),
                })
                .collect())
        }
        PatchMode::Grid { stride } => {
            if stride == 0 {
                return Err(Error::InvalidParameter("grid stride must be positive".into()));
            }
            let xs = grid_axis(w, size, stride);
            let ys = grid_axis(h, size, stride);
            Ok(ys
                .iter()
                .flat_map(|&y| xs.iter().map(move |&x| PatchOffset { x, y }))
                .collect())
        }
    }
}

/// Network input for one crop: channel-major pixels shifted to `[-0.5, 0.5]`.
pub fn patch_tensor(img: &Image, at: PatchOffset, size: usize, out: &mut Vec<f64>) {
    for c in 0..img.channels() {
        let plane = img.plane(c);
        for y in at.y..at.y + size {
            let row = &plane[y * img.width() + at.x..][..size];
            out.extend(row.iter().map(|v| v - 0.5));
        }
    }
}
