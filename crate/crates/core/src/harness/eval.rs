use std::borrow::Cow;

use super::metrics::{metric_pair, pool_average, MetricPair};
use crate::codec::{apply_reverse_map, ReverseMapper};
use crate::error::{Error, Result};
use crate::lab::{extract_patches, patch_tensor, Dataset, Image, PatchMode, Split};
use crate::network::{Checkpoint, Mode, Network, Prediction};

/// Images evaluated per forward batch in [`evaluate_model`].
const EVAL_CHUNK: usize = 64;

/// Test-time grid patches for a list of images, flattened into one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPatches {
    pub inputs: Vec<f64>,
    /// Patches contributed by each image, in order.
    pub counts: Vec<usize>,
}

pub(crate) fn as_network_input<'a>(img: &'a Image, channels: usize) -> Result<Cow<'a, Image>> {
    match (img.channels(), channels) {
        (a, b) if a == b => Ok(Cow::Borrowed(img)),
        (1, 3) => Ok(Cow::Owned(img.to_rgb())),
        (a, b) => Err(Error::InvalidInput(format!("{a}-channel image for a {b}-channel network"))),
    }
}

impl GridPatches {
    pub fn new<'a>(
        images: impl IntoIterator<Item = &'a Image>,
        size: usize,
        channels: usize,
        stride: usize,
    ) -> Result<Self> {
        let mut inputs = Vec::new();
        let mut counts = Vec::new();
        for (i, img) in images.into_iter().enumerate() {
            let img = as_network_input(img, channels).map_err(|e| Error::at(i, e))?;
            let offsets = extract_patches(&img, PatchMode::Grid { stride }, size).map_err(|e| Error::at(i, e))?;
            for o in &offsets {
                patch_tensor(&img, *o, size, &mut inputs);
            }
            counts.push(offsets.len());
        }
        Ok(GridPatches { inputs, counts })
    }
}

/// Per-patch scalar scores: the regressed value for the scalar head, the
/// reverse-mapped PQR for the softmax head.
pub fn patch_scores(net: &Network, mapper: Option<&ReverseMapper>, inputs: &[f64]) -> Result<Vec<f64>> {
    net.forward(inputs, Mode::Eval)?
        .iter()
        .map(|p| match (p, mapper) {
            (Prediction::Scalar(v), None) => Ok(*v),
            (Prediction::Pqr(q), Some(m)) => apply_reverse_map(m, q),
            (Prediction::Pqr(_), None) => Err(Error::InvalidParameter("pqr head needs a reverse mapper".into())),
            (Prediction::Scalar(_), Some(_)) => Err(Error::InvalidParameter("sqr head takes no reverse mapper".into())),
        })
        .collect()
}

/// Average-pooled image scores.
pub fn predict_images(net: &Network, mapper: Option<&ReverseMapper>, grid: &GridPatches) -> Result<Vec<f64>> {
    let scores = patch_scores(net, mapper, &grid.inputs)?;
    let mut out = Vec::with_capacity(grid.counts.len());
    let mut at = 0;
    for &n in &grid.counts {
        out.push(pool_average(&scores[at..at + n])?);
        at += n;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePrediction {
    pub id: String,
    pub mos: f64,
    pub predicted: f64,
    pub patches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricPair,
    pub predictions: Vec<ImagePrediction>,
}

impl Evaluation {
    /// `id,mos,predicted,patches`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,mos,predicted,patches\n");
        for p in &self.predictions {
            out.push_str(&format!("{},{},{},{}\n", p.id, p.mos, p.predicted, p.patches));
        }
        out
    }
}

/// Scores the images of `split` (all images when `None`) with grid patches
/// at `stride` and correlates the pooled scores with the MOS.
pub fn evaluate_model(ckpt: &Checkpoint, data: &Dataset, split: Option<Split>, stride: usize) -> Result<Evaluation> {
    let indices: Vec<usize> = match split {
        Some(s) => data.manifest.split_indices(s),
        None => (0..data.len()).collect(),
    };
    if indices.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two images to correlate, {} selected",
            indices.len()
        )));
    }
    let arch = ckpt.network.arch();
    let mut predictions = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_CHUNK) {
        let grid = GridPatches::new(chunk.iter().map(|&i| &data.images[i]), arch.input_size, arch.input_channels, stride)
            .map_err(|e| match e {
                Error::AtIndex { index, source } => Error::InvalidInput(format!(
                    "image {}: {source}",
                    data.manifest.images[chunk[index]].id
                )),
                other => other,
            })?;
        let scores = predict_images(&ckpt.network, ckpt.mapper.as_ref(), &grid)?;
        for ((&i, s), n) in chunk.iter().zip(scores).zip(&grid.counts) {
            let r = &data.manifest.images[i];
            predictions.push(ImagePrediction {
                id: r.id.clone(),
                mos: r.mos,
                predicted: s,
                patches: *n,
            });
        }
    }
    let pred: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
    let mos: Vec<f64> = predictions.iter().map(|p| p.mos).collect();
    Ok(Evaluation {
        metrics: metric_pair(&pred, &mos)?,
        predictions,
    })
}
