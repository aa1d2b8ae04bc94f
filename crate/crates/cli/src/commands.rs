use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use pqr_core::anchors::{lloyd_max, uniform_anchors, LloydMaxOptions};
use pqr_core::codec::{encode_batch, fit_reverse_map};
use pqr_core::harness::{
    beta_grid, compare as run_compare, evaluate_model, m_grid, split_by_content, sweep as run_sweep, train_model,
    ExperimentConfig, HeadKind, SplitFractions, SweepParam, SweepTable,
};
use pqr_core::io::write_atomic;
use pqr_core::lab::{build_dataset, Dataset, DatasetConfig, DistortionKind, OpinionModel, Split};
use pqr_core::network::{load_checkpoint, save_checkpoint, trace_csv, ArchConfig, Head, TrainConfig};
use pqr_core::{AnchorMethod, Distance, ScoreRange};

use crate::config::{DatasetSource, RunConfig};
use crate::Usage;

/// Environment variable that relocates relative output paths.
pub const OUT_ROOT_VAR: &str = "PQR_OUT_ROOT";

fn out_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_VAR) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn split_list<T: std::str::FromStr>(flag: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(usage(format!("--{flag} needs at least one value")));
    }
    items
        .into_iter()
        .map(|s| s.parse().map_err(|e| usage(format!("--{flag} {s:?}: {e}"))))
        .collect()
}

fn fractions(train: f64, val: f64, test: f64) -> Result<SplitFractions> {
    SplitFractions::new(train, val, test).map_err(|e| usage(e.to_string()))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Number of pristine source images.
    #[arg(long, default_value_t = 60)]
    pub sources: usize,
    /// Side length of the square images in pixels.
    #[arg(long, default_value_t = 48)]
    pub size: usize,
    /// Comma-separated distortion kinds (blur, awgn, contrast, block or their full names).
    #[arg(long, default_value = "gaussian_blur,awgn,contrast_decrement,block_quantization")]
    pub kinds: String,
    /// Severity levels per kind, evenly spaced over [0.2, 0.8].
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Standard deviation of simulated subject opinions.
    #[arg(long, default_value_t = 0.19)]
    pub sigma: f64,
    /// Simulated subjects per image.
    #[arg(long, default_value_t = 35)]
    pub subjects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Patch size the images must accommodate.
    #[arg(long, default_value_t = 32)]
    pub patch_size: usize,
    /// Fraction of sources labelled train (80/20 content-disjoint split by default).
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Seed of the split shuffle; defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Directory receiving `manifest.tsv` and `images/`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let kinds: Vec<DistortionKind> = split_list("kinds", &a.kinds)?;
    let opinions = OpinionModel::new(a.sigma, a.subjects).map_err(|e| usage(e.to_string()))?;
    if a.levels == 0 {
        return Err(usage("--levels must be at least 1"));
    }
    let fr = fractions(a.train_fraction, a.val_fraction, a.test_fraction)?;
    let cfg = DatasetConfig {
        sources: a.sources,
        size: a.size,
        patch_size: a.patch_size,
        kinds,
        levels: a.levels,
        opinions,
        seed: a.seed,
    };
    let mut data = build_dataset(&cfg)?;
    data.manifest = split_by_content(&data.manifest, fr, a.split_seed.unwrap_or(a.seed))?;
    let dir = out_path(&a.out_dir);
    let manifest = data.save(&dir)?;

    println!("manifest {}", manifest.display());
    println!("images {}", data.len());
    for split in [Split::Train, Split::Val, Split::Test] {
        let n = data.manifest.split_indices(split).len();
        if n > 0 {
            println!("{split} {n}");
        }
    }
    println!("mos histogram (10 bins over [0, 1])");
    let mut bins = [0usize; 10];
    for r in &data.manifest.images {
        bins[((r.mos * 10.0) as usize).min(9)] += 1;
    }
    for (i, n) in bins.iter().enumerate() {
        println!("  [{:.1}, {:.1}{} {n}", i as f64 / 10.0, (i + 1) as f64 / 10.0, if i == 9 { "]" } else { ")" });
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EncoderArgs {
    /// Softmax sharpness of the score-to-PQR encoding.
    #[arg(long, default_value_t = 64.0)]
    pub beta: f64,
    /// Number of quality anchors.
    #[arg(long = "M", visible_alias = "m", default_value_t = 5)]
    pub m: usize,
    /// Anchor placement: uniform or lloyd_max.
    #[arg(long, default_value = "uniform")]
    pub anchor_method: AnchorMethod,
    /// Score-to-anchor distance: squared_euclidean or l1.
    #[arg(long, default_value = "squared_euclidean")]
    pub distance: Distance,
}

impl EncoderArgs {
    fn check(&self) -> Result<()> {
        if self.m < 2 {
            return Err(usage(format!("--M {} is too small, a PQR needs at least 2 anchors", self.m)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(usage(format!("--beta {} must be positive", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest whose train split is used.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output head: pqr (softmax over anchors) or sqr (scalar regression).
    #[arg(long, default_value = "pqr")]
    pub head: HeadKind,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    /// Architecture preset: desk or full.
    #[arg(long, default_value = "desk")]
    pub arch: String,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// First-epoch learning rate; later epochs are log-spaced down to --lr-end.
    #[arg(long, default_value_t = 1e-2)]
    pub lr_start: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_end: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// Random crops per training image.
    #[arg(long, default_value_t = 50)]
    pub patches_per_image: usize,
    /// Ridge strength of the reverse-map fit.
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV; defaults to the checkpoint path with `.loss.csv` appended.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    if a.head == HeadKind::Pqr {
        a.encoder.check()?;
    }
    let mut arch = ArchConfig::preset(&a.arch, Head::Sqr).map_err(|e| usage(e.to_string()))?;
    arch.dropout = a.dropout;
    let cfg = ExperimentConfig {
        head: a.head,
        encoder: pqr_core::harness::EncoderSettings {
            beta: a.encoder.beta,
            m: a.encoder.m,
            method: a.encoder.anchor_method,
            distance: a.encoder.distance,
        },
        arch,
        train: TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch_size,
            lr_start: a.lr_start,
            lr_end: a.lr_end,
            momentum: a.momentum,
            weight_decay: a.weight_decay,
            seed: 0,
        },
        patches_per_image: a.patches_per_image,
        ridge: a.ridge,
        seed: a.seed,
        ..ExperimentConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let data = load_dataset(&a.manifest)?;
    let (ckpt, trace) = train_model(&cfg, &data)?;

    let out = out_path(&a.out);
    let trace_path = match &a.trace {
        Some(p) => out_path(p),
        None => PathBuf::from(format!("{}.loss.csv", out.display())),
    };
    save_checkpoint(&out, &ckpt)?;
    write_text(&trace_path, &trace_csv(&trace))?;
    println!("# {}", cfg.to_record());
    println!("checkpoint {}", out.display());
    println!("trace {}", trace_path.display());
    println!("params {}", ckpt.network.n_params());
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        println!("loss {} -> {}", first.mean_loss, last.mean_loss);
    }
    if let Some(m) = &ckpt.mapper {
        println!("reverse_map fit_mae={}", m.fit_mae());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Grid stride of the test patches.
    #[arg(long, default_value_t = 16)]
    pub stride: usize,
    /// Expected anchor count; a checkpoint with a different M is rejected.
    #[arg(long = "M", visible_alias = "m")]
    pub m: Option<usize>,
    /// Expected beta; a checkpoint with a different beta is rejected.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Per-image predictions CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let split = match a.split.as_str() {
        "all" => None,
        s => Some(s.parse::<Split>().map_err(|e| usage(e.to_string()))?),
    };
    if a.stride == 0 {
        return Err(usage("--stride must be positive"));
    }
    let ckpt = load_checkpoint(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let enc = ckpt.encoder.as_ref();
    if let Some(m) = a.m {
        let have = enc.map(|e| e.len());
        if have != Some(m) {
            return Err(usage(format!(
                "--M {m} does not match the checkpoint ({})",
                have.map_or("scalar head, no anchors".to_string(), |n| format!("M={n}"))
            )));
        }
    }
    if let Some(beta) = a.beta {
        let have = enc.map(|e| e.beta());
        if have != Some(beta) {
            return Err(usage(format!(
                "--beta {beta} does not match the checkpoint ({})",
                have.map_or("scalar head".to_string(), |b| format!("beta={b}"))
            )));
        }
    }
    let data = load_dataset(&a.manifest)?;
    let ev = evaluate_model(&ckpt, &data, split, a.stride)?;
    if let Some(p) = &a.out {
        write_text(&out_path(p), &ev.to_csv())?;
    }
    let counts: Vec<usize> = ev.predictions.iter().map(|p| p.patches).collect();
    let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    println!("images={} split={} stride={}", ev.predictions.len(), a.split, a.stride);
    if lo == hi {
        println!("patches_per_image={lo}");
    } else {
        println!("patches_per_image={lo}..{hi}");
    }
    println!("SRCC={} PLCC={}", ev.metrics.srcc, ev.metrics.plcc);
    Ok(())
}

fn config_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSource::Manifest(p) => load_dataset(p),
        DatasetSource::Generate(d) => Ok(build_dataset(d)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParameter {
    Beta,
    #[value(name = "M", alias = "m")]
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepMethods {
    Uniform,
    #[value(name = "lloyd_max")]
    LloydMax,
    Both,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Run configuration (see the README for the format).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub parameter: SweepParameter,
    /// Anchor placement for an M sweep; the config's method is used for beta.
    #[arg(long, value_enum, default_value = "uniform")]
    pub anchor_method: SweepMethods,
    /// Comma-separated grid; defaults to 1,2,4,...,512 for beta and 2..10 for M.
    #[arg(long)]
    pub grid: Option<String>,
    /// Output CSV.
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let params: Vec<SweepParam> = match a.parameter {
        SweepParameter::Beta => {
            let values = match &a.grid {
                Some(g) => split_list("grid", g)?,
                None => beta_grid(),
            };
            vec![SweepParam::Beta(values)]
        }
        SweepParameter::M => {
            let values: Vec<usize> = match &a.grid {
                Some(g) => split_list("grid", g)?,
                None => m_grid(),
            };
            let methods = match a.anchor_method {
                SweepMethods::Uniform => vec![AnchorMethod::Uniform],
                SweepMethods::LloydMax => vec![AnchorMethod::LloydMax],
                SweepMethods::Both => vec![AnchorMethod::Uniform, AnchorMethod::LloydMax],
            };
            methods
                .into_iter()
                .map(|method| SweepParam::M { method, values: values.clone() })
                .collect()
        }
    };
    let cfg = load_config(&a.config)?;
    let data = config_dataset(&cfg)?;
    let exp = cfg.experiment.with_head(HeadKind::Pqr);
    let mut table: Option<SweepTable> = None;
    for p in &params {
        let t = run_sweep(&exp, &data, p)?;
        match &mut table {
            Some(all) => all.rows.extend(t.rows),
            None => table = Some(t),
        }
    }
    let table = table.expect("at least one sweep");
    let out = out_path(&a.out);
    let csv = format!("# {}\n{}", exp.to_record(), table.to_csv());
    write_text(&out, &csv)?;
    print!("{}", table.to_csv());
    println!("wrote {} ({} rows)", out.display(), table.rows.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// CSV of scores in [0, 1], one per row in the first column; a header row is allowed.
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    /// Scores that place the Lloyd-Max anchors; defaults to --scores.
    #[arg(long)]
    pub lloyd_scores: Option<PathBuf>,
    /// Ridge strength of the reverse-map fit.
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    /// Output CSV of PQR vectors.
    #[arg(long, default_value = "pqr.csv")]
    pub out: PathBuf,
}

/// Target mean absolute error of the reverse map on the unit score scale.
const FIT_MAE_TARGET: f64 = 0.01;

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let range = ScoreRange::unit();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        let value: f64 = match field.parse() {
            Ok(v) => v,
            Err(_) if n == 0 => continue,
            Err(_) => anyhow::bail!("{} row {}: {field:?} is not a number", path.display(), n + 1),
        };
        range
            .check(value)
            .with_context(|| format!("{} row {}", path.display(), n + 1))?;
        out.push(value);
    }
    if out.is_empty() {
        anyhow::bail!("{} holds no scores", path.display());
    }
    Ok(out)
}

pub fn encode(a: EncodeArgs) -> Result<()> {
    a.encoder.check()?;
    let scores = read_scores(&a.scores)?;
    let range = ScoreRange::unit();
    let anchors = match a.encoder.anchor_method {
        AnchorMethod::Uniform => uniform_anchors(range, a.encoder.m)?,
        AnchorMethod::LloydMax => {
            let train = match &a.lloyd_scores {
                Some(p) => read_scores(p)?,
                None => scores.clone(),
            };
            lloyd_max(&train, a.encoder.m, range, LloydMaxOptions::default())?.0
        }
    };
    let enc = pqr_core::EncoderConfig::new(a.encoder.beta, anchors, a.encoder.distance)?;
    let pqrs = encode_batch(&scores, &enc)?;
    let mapper = fit_reverse_map(&pqrs, &scores, range, a.ridge)?;

    let mut csv = String::from("score");
    for i in 1..=enc.len() {
        csv.push_str(&format!(",q{i}"));
    }
    csv.push('\n');
    for (y, q) in scores.iter().zip(&pqrs) {
        csv.push_str(&y.to_string());
        for p in q.probs() {
            csv.push_str(&format!(",{p}"));
        }
        csv.push('\n');
    }
    let out = out_path(&a.out);
    write_text(&out, &csv)?;
    let centers: Vec<String> = enc.anchors().centers().iter().map(|c| format!("{c}")).collect();
    println!("anchors {}", centers.join(","));
    println!("encoded {} scores to {}", scores.len(), out.display());
    let verdict = if mapper.fit_mae() < FIT_MAE_TARGET { "below" } else { "above" };
    println!("fit_mae={} ({verdict} the {FIT_MAE_TARGET} target)", mapper.fit_mae());
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run configuration (see the README for the format).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving comparison.txt, table.csv, curves.csv and per-head run CSVs.
    #[arg(long, default_value = "compare")]
    pub out_dir: PathBuf,
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::parse(&text, base).map_err(|e| usage(format!("{}: {e:#}", path.display())))
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let data = config_dataset(&cfg)?;
    let report = run_compare(&cfg.experiment, &data)?;
    let dir = out_path(&a.out_dir);
    let text = report.text();
    write_text(&dir.join("table.csv"), &report.table_csv())?;
    write_text(&dir.join("curves.csv"), &report.curves_csv())?;
    write_text(&dir.join("pqr_runs.csv"), &report.pqr.to_csv())?;
    write_text(&dir.join("sqr_runs.csv"), &report.sqr.to_csv())?;
    write_text(&dir.join("comparison.txt"), &text)?;
    print!("{text}");
    println!("wrote {}", dir.display());
    Ok(())
}
