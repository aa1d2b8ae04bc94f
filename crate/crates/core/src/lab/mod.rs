//! Synthetic IQA datasets: procedural sources, parametric distortions,
//! simulated subjective scores and patch extraction.

mod dataset;
mod distort;
mod image;
mod mos;
mod patches;
mod sources;

pub use dataset::{
    build_dataset, level_severities, Dataset, DatasetConfig, DatasetManifest, ImageRecord, PatchRecord, Split,
    MANIFEST_FILE, MANIFEST_HEADER,
};
pub use distort::{
    apply_distortion, DistortionKind, DistortionSpec, BLOCK_LEVELS_MAX, BLOCK_SIZE, BLUR_SIGMA_MAX, NOISE_STD_MAX,
};
pub use image::Image;
pub use mos::{synth_mos, true_quality, OpinionModel, SyntheticScore};
pub use patches::{extract_patches, patch_tensor, PatchMode, PatchOffset};
pub use sources::{generate_sources, render, source_id, Origin, SourceImage, SourceKind};
