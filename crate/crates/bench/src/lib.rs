//! Fixtures shared by the benchmarks.

use pqr_core::lab::{generate_sources, patch_tensor, PatchOffset};
use pqr_core::network::PatchSet;

/// `n` desk-sized (32x32 RGB) patches cut from procedural sources, scored
/// on a ramp over [0.05, 0.95].
pub fn desk_patches(n: usize, seed: u64) -> PatchSet {
    let sources = generate_sources(n.clamp(1, 16), 48, 32, seed).expect("valid source parameters");
    let mut set = PatchSet::new(3 * 32 * 32);
    let mut buf = Vec::new();
    for i in 0..n {
        let img = &sources[i % sources.len()].image;
        let at = PatchOffset { x: (i * 5) % 17, y: (i * 3) % 17 };
        buf.clear();
        patch_tensor(img, at, 32, &mut buf);
        let score = 0.05 + 0.9 * i as f64 / n.max(2).saturating_sub(1) as f64;
        set.push(&buf, score.min(0.95)).expect("patch length matches");
    }
    set
}

/// Evenly spaced scores on [0, 1].
pub fn score_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1).max(1) as f64).collect()
}
