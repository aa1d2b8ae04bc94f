use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::eval::{as_network_input, predict_images, GridPatches};
use super::metrics::{median, metric_pair, std_dev, MetricPair};
use super::split::{split_by_content, SplitFractions};
use crate::anchors::{lloyd_max, uniform_anchors, AnchorMethod, LloydMaxOptions, ScoreRange};
use crate::codec::{encode_batch, fit_reverse_map, Distance, EncoderConfig, ReverseMapper};
use crate::error::{Error, Result};
use crate::lab::{extract_patches, patch_tensor, Dataset, DatasetManifest, PatchMode, Split};
use crate::network::{train_with, ArchConfig, Checkpoint, EpochStats, Head, Network, PatchSet, TrainConfig};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    Pqr,
    Sqr,
}

impl HeadKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeadKind::Pqr => "pqr",
            HeadKind::Sqr => "sqr",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pqr" => Ok(HeadKind::Pqr),
            "sqr" => Ok(HeadKind::Sqr),
            other => Err(Error::InvalidParameter(format!("unknown head {other:?} (expected pqr or sqr)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSettings {
    pub beta: f64,
    pub m: usize,
    pub method: AnchorMethod,
    pub distance: Distance,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        EncoderSettings {
            beta: 64.0,
            m: 5,
            method: AnchorMethod::Uniform,
            distance: Distance::SquaredEuclidean,
        }
    }
}

impl EncoderSettings {
    /// Anchors from the training scores (Lloyd-Max) or the score range
    /// (uniform).
    pub fn build(&self, train_scores: &[f64]) -> Result<EncoderConfig> {
        let range = ScoreRange::unit();
        let anchors = match self.method {
            AnchorMethod::Uniform => uniform_anchors(range, self.m)?,
            AnchorMethod::LloydMax => lloyd_max(train_scores, self.m, range, LloydMaxOptions::default())?.0,
        };
        EncoderConfig::new(self.beta, anchors, self.distance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub head: HeadKind,
    pub encoder: EncoderSettings,
    /// Its `head` field is replaced according to `head` and `encoder.m`.
    pub arch: ArchConfig,
    /// Its `seed` is replaced by a per-repetition stream.
    pub train: TrainConfig,
    pub fractions: SplitFractions,
    pub repetitions: usize,
    /// Random training crops per image.
    pub patches_per_image: usize,
    pub test_stride: usize,
    /// Ridge strength of the reverse-map fit.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            head: HeadKind::Pqr,
            encoder: EncoderSettings::default(),
            arch: ArchConfig::desk(Head::Pqr(5)),
            train: TrainConfig::default(),
            fractions: SplitFractions::default(),
            repetitions: 10,
            patches_per_image: 50,
            test_stride: 16,
            ridge: 1e-6,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn head_arch(&self) -> ArchConfig {
        let mut a = self.arch.clone();
        a.head = match self.head {
            HeadKind::Pqr => Head::Pqr(self.encoder.m),
            HeadKind::Sqr => Head::Sqr,
        };
        a
    }

    pub fn with_head(&self, head: HeadKind) -> Self {
        ExperimentConfig { head, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 || self.patches_per_image == 0 || self.test_stride == 0 {
            return Err(Error::InvalidParameter(
                "repetitions, patches_per_image and test_stride must be positive".into(),
            ));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidParameter("ridge must be nonnegative".into()));
        }
        self.fractions.validate()?;
        self.train.validate()?;
        self.head_arch().validate()
    }

    /// One-line echo of every knob, written at the top of reports.
    pub fn to_record(&self) -> String {
        let enc = match self.head {
            HeadKind::Pqr => format!(
                " beta={} M={} anchors={} distance={}",
                self.encoder.beta, self.encoder.m, self.encoder.method, self.encoder.distance
            ),
            HeadKind::Sqr => String::new(),
        };
        let t = &self.train;
        format!(
            "head={}{enc} arch=[{}] epochs={} batch={} lr={},{} momentum={} weight_decay={} \
             split={},{},{} repetitions={} patches={} stride={} ridge={} seed={}",
            self.head,
            self.head_arch().to_record(),
            t.epochs,
            t.batch_size,
            t.lr_start,
            t.lr_end,
            t.momentum,
            t.weight_decay,
            self.fractions.train,
            self.fractions.val,
            self.fractions.test,
            self.repetitions,
            self.patches_per_image,
            self.test_stride,
            self.ridge,
            self.seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub metrics: MetricPair,
    /// False when the test predictions were constant; the metrics are then
    /// recorded as 0.
    pub defined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionRecord {
    /// 1-based.
    pub repetition: usize,
    pub split_seed: u64,
    pub train_images: usize,
    pub test_images: usize,
    pub epochs: Vec<EpochRecord>,
}

impl RepetitionRecord {
    pub fn final_metrics(&self) -> MetricPair {
        self.epochs.last().unwrap().metrics
    }

    /// First epoch whose SRCC reaches `fraction` of the final SRCC.
    pub fn convergence_epoch(&self, fraction: f64) -> usize {
        let target = fraction * self.final_metrics().srcc;
        self.epochs
            .iter()
            .find(|e| e.metrics.srcc >= target)
            .map_or(self.epochs.len(), |e| e.epoch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Per-epoch medians over repetitions: (srcc, plcc, loss).
    pub median_curve: Vec<(f64, f64, f64)>,
    pub final_median: MetricPair,
    pub final_std: MetricPair,
    /// Largest per-epoch median, taken separately for each metric.
    pub best_median: MetricPair,
    pub best_epoch: usize,
    /// Median over repetitions of the first epoch reaching 95% of the final SRCC.
    pub convergence_epoch: f64,
    pub undefined_epochs: usize,
}

pub const CONVERGENCE_FRACTION: f64 = 0.95;

impl Summary {
    fn new(reps: &[RepetitionRecord]) -> Summary {
        let epochs = reps[0].epochs.len();
        let col = |f: &dyn Fn(&RepetitionRecord) -> f64| -> Vec<f64> { reps.iter().map(f).collect() };
        let median_curve: Vec<(f64, f64, f64)> = (0..epochs)
            .map(|e| {
                (
                    median(&col(&|r| r.epochs[e].metrics.srcc)),
                    median(&col(&|r| r.epochs[e].metrics.plcc)),
                    median(&col(&|r| r.epochs[e].loss)),
                )
            })
            .collect();
        let finals_s = col(&|r| r.final_metrics().srcc);
        let finals_p = col(&|r| r.final_metrics().plcc);
        let (mut best_epoch, mut best_s) = (1, f64::NEG_INFINITY);
        for (e, c) in median_curve.iter().enumerate() {
            if c.0 > best_s {
                best_s = c.0;
                best_epoch = e + 1;
            }
        }
        let best_p = median_curve.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        Summary {
            final_median: MetricPair {
                srcc: median(&finals_s),
                plcc: median(&finals_p),
            },
            final_std: MetricPair {
                srcc: std_dev(&finals_s),
                plcc: std_dev(&finals_p),
            },
            best_median: MetricPair {
                srcc: best_s,
                plcc: best_p,
            },
            best_epoch,
            convergence_epoch: median(&col(&|r| r.convergence_epoch(CONVERGENCE_FRACTION) as f64)),
            undefined_epochs: reps.iter().flat_map(|r| &r.epochs).filter(|e| !e.defined).count(),
            median_curve,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub head: HeadKind,
    pub config: String,
    pub repetitions: Vec<RepetitionRecord>,
    pub summary: Summary,
}

impl ExperimentReport {
    pub fn split_seeds(&self) -> Vec<u64> {
        self.repetitions.iter().map(|r| r.split_seed).collect()
    }

    /// `repetition,epoch,lr,loss,srcc,plcc`, one row per repetition and epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("repetition,epoch,lr,loss,srcc,plcc\n");
        for r in &self.repetitions {
            for e in &r.epochs {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.repetition, e.epoch, e.lr, e.loss, e.metrics.srcc, e.metrics.plcc
                ));
            }
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let seeds: Vec<String> = self.split_seeds().iter().map(|v| v.to_string()).collect();
        format!(
            "# experiment {}\n# split_seeds {}\nhead={}\nfinal_median_srcc={}\nfinal_median_plcc={}\n\
             final_std_srcc={}\nfinal_std_plcc={}\nbest_median_srcc={}\nbest_median_plcc={}\n\
             best_epoch={}\nconvergence_epoch={}\nundefined_epochs={}\n",
            self.config,
            seeds.join(","),
            self.head,
            s.final_median.srcc,
            s.final_median.plcc,
            s.final_std.srcc,
            s.final_std.plcc,
            s.best_median.srcc,
            s.best_median.plcc,
            s.best_epoch,
            s.convergence_epoch,
            s.undefined_epochs
        )
    }
}

/// Everything a repetition needs before training starts.
struct Prepared {
    split_seed: u64,
    train: PatchSet,
    train_images: usize,
    grid: GridPatches,
    test_mos: Vec<f64>,
    encoder: Option<EncoderConfig>,
    mapper: Option<ReverseMapper>,
    net: Network,
    train_cfg: TrainConfig,
}

/// Random training crops of the listed images, labelled with their MOS.
/// Crops of image `i` use the stream `derive_seed(seed, [1, i])`.
fn crop_patches(
    data: &Dataset,
    manifest: &DatasetManifest,
    indices: &[usize],
    arch: &ArchConfig,
    per_image: usize,
    seed: u64,
) -> Result<PatchSet> {
    let size = arch.input_size;
    let mut out = PatchSet::new(arch.input_len());
    let mut patch = Vec::with_capacity(arch.input_len());
    for &i in indices {
        let img = as_network_input(&data.images[i], arch.input_channels)?;
        let mode = PatchMode::Random {
            count: per_image,
            seed: derive_seed(seed, &[1, i as u64]),
        };
        for o in extract_patches(&img, mode, size)? {
            patch.clear();
            patch_tensor(&img, o, size, &mut patch);
            out.push(&patch, manifest.images[i].mos)?;
        }
    }
    Ok(out)
}

fn prepare(cfg: &ExperimentConfig, data: &Dataset, rep: usize) -> Result<Prepared> {
    let rep_seed = derive_seed(cfg.seed, &[rep as u64]);
    let split_seed = derive_seed(rep_seed, &[0]);
    let manifest = split_by_content(&data.manifest, cfg.fractions, split_seed)?;
    let arch = cfg.head_arch();
    let size = arch.input_size;

    let train_idx = manifest.split_indices(Split::Train);
    let train = crop_patches(data, &manifest, &train_idx, &arch, cfg.patches_per_image, rep_seed)?;
    let train_mos: Vec<f64> = train_idx.iter().map(|&i| manifest.images[i].mos).collect();

    let test_idx = manifest.split_indices(Split::Test);
    let grid = GridPatches::new(test_idx.iter().map(|&i| &data.images[i]), size, arch.input_channels, cfg.test_stride)?;
    let test_mos = test_idx.iter().map(|&i| manifest.images[i].mos).collect();

    let (encoder, mapper) = match cfg.head {
        HeadKind::Pqr => {
            let enc = cfg.encoder.build(&train_mos)?;
            let mapper = fit_reverse_map(&encode_batch(&train_mos, &enc)?, &train_mos, ScoreRange::unit(), cfg.ridge)?;
            (Some(enc), Some(mapper))
        }
        HeadKind::Sqr => (None, None),
    };
    let net = Network::build(arch, derive_seed(rep_seed, &[2]))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(rep_seed, &[3]),
        ..cfg.train.clone()
    };
    Ok(Prepared {
        split_seed,
        train,
        train_images: train_idx.len(),
        grid,
        test_mos,
        encoder,
        mapper,
        net,
        train_cfg,
    })
}

fn run_repetition(cfg: &ExperimentConfig, data: &Dataset, rep: usize) -> Result<RepetitionRecord> {
    let p = prepare(cfg, data, rep)?;
    let mut epochs = Vec::with_capacity(p.train_cfg.epochs);
    let mapper = p.mapper.as_ref();
    train_with(p.net, &p.train, &p.train_cfg, p.encoder.as_ref(), |stats, net| {
        let pred = predict_images(net, mapper, &p.grid)?;
        let (metrics, defined) = match metric_pair(&pred, &p.test_mos) {
            Ok(m) => (m, true),
            Err(Error::UndefinedCorrelation(_)) => (MetricPair { srcc: 0.0, plcc: 0.0 }, false),
            Err(e) => return Err(e),
        };
        epochs.push(EpochRecord {
            epoch: stats.epoch,
            lr: stats.lr,
            loss: stats.mean_loss,
            metrics,
            defined,
        });
        Ok(())
    })?;
    Ok(RepetitionRecord {
        repetition: rep + 1,
        split_seed: p.split_seed,
        train_images: p.train_images,
        test_images: p.test_mos.len(),
        epochs,
    })
}

/// Repetition `r` draws its split, crops, initialization and batch order
/// from streams derived from `(seed, r)`, independent of the head, so PQR and
/// SQR runs with the same seed see identical splits.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    let results: Vec<Result<RepetitionRecord>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            run_repetition(cfg, data, r).map_err(|e| Error::Repetition {
                repetition: r + 1,
                source: Box::new(e),
            })
        })
        .collect();
    let repetitions = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        head: cfg.head,
        config: cfg.to_record(),
        summary: Summary::new(&repetitions),
        repetitions,
    })
}

/// Trains one model on the images the manifest already labels as
/// [`Split::Train`]. Streams are derived as for the first repetition of
/// [`run_experiment`]; `repetitions` and `fractions` are not used.
pub fn train_model(cfg: &ExperimentConfig, data: &Dataset) -> Result<(Checkpoint, Vec<EpochStats>)> {
    cfg.validate()?;
    let idx = data.manifest.split_indices(Split::Train);
    if idx.is_empty() {
        return Err(Error::InvalidInput("manifest has no images in the train split".into()));
    }
    let rep_seed = derive_seed(cfg.seed, &[0]);
    let arch = cfg.head_arch();
    let patches = crop_patches(data, &data.manifest, &idx, &arch, cfg.patches_per_image, rep_seed)?;
    let mos: Vec<f64> = idx.iter().map(|&i| data.manifest.images[i].mos).collect();
    let (encoder, mapper) = match cfg.head {
        HeadKind::Pqr => {
            let enc = cfg.encoder.build(&mos)?;
            let mapper = fit_reverse_map(&encode_batch(&mos, &enc)?, &mos, ScoreRange::unit(), cfg.ridge)?;
            (Some(enc), Some(mapper))
        }
        HeadKind::Sqr => (None, None),
    };
    let net = Network::build(arch, derive_seed(rep_seed, &[2]))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(rep_seed, &[3]),
        ..cfg.train.clone()
    };
    let (net, trace) = train_with(net, &patches, &train_cfg, encoder.as_ref(), |_, _| Ok(()))?;
    Ok((Checkpoint::new(net, encoder, mapper)?, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub pqr: ExperimentReport,
    pub sqr: ExperimentReport,
}

/// Runs the same configuration with both heads.
pub fn compare(cfg: &ExperimentConfig, data: &Dataset) -> Result<ComparisonReport> {
    let pqr = run_experiment(&cfg.with_head(HeadKind::Pqr), data)?;
    let sqr = run_experiment(&cfg.with_head(HeadKind::Sqr), data)?;
    if pqr.split_seeds() != sqr.split_seeds() {
        return Err(Error::InvalidParameter("heads were evaluated on different splits".into()));
    }
    Ok(ComparisonReport { pqr, sqr })
}

impl ComparisonReport {
    /// `head,metric,final_median,final_std,best_median,convergence_epoch`
    pub fn table_csv(&self) -> String {
        let mut out = String::from("head,metric,final_median,final_std,best_median,convergence_epoch\n");
        for r in [&self.pqr, &self.sqr] {
            let s = &r.summary;
            out.push_str(&format!(
                "{},srcc,{},{},{},{}\n",
                r.head, s.final_median.srcc, s.final_std.srcc, s.best_median.srcc, s.convergence_epoch
            ));
            out.push_str(&format!(
                "{},plcc,{},{},{},{}\n",
                r.head, s.final_median.plcc, s.final_std.plcc, s.best_median.plcc, s.convergence_epoch
            ));
        }
        out
    }

    /// Median per-epoch curves of both heads.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("epoch,pqr_srcc,pqr_plcc,pqr_loss,sqr_srcc,sqr_plcc,sqr_loss\n");
        for (e, (a, b)) in self
            .pqr
            .summary
            .median_curve
            .iter()
            .zip(&self.sqr.summary.median_curve)
            .enumerate()
        {
            out.push_str(&format!("{},{},{},{},{},{},{}\n", e + 1, a.0, a.1, a.2, b.0, b.1, b.2));
        }
        out
    }

    pub fn text(&self) -> String {
        let seeds: Vec<String> = self.pqr.split_seeds().iter().map(|v| v.to_string()).collect();
        format!(
            "# pqr {}\n# sqr {}\n# split_seeds {} (identical for both heads)\n{}",
            self.pqr.config,
            self.sqr.config,
            seeds.join(","),
            self.table_csv()
        )
    }
}
