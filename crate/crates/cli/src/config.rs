//! Run configuration files for `compare` and `sweep`.
//!
//! ```text
//! # comments start with '#'
//! [dataset]
//! manifest = data/manifest.tsv    # or generate in memory:
//! sources = 60
//! size = 48
//! kinds = gaussian_blur,awgn,contrast_decrement,block_quantization
//! levels = 3
//! sigma = 0.19
//! subjects = 35
//! seed = 0
//!
//! [arch]
//! preset = desk
//! dropout = 0.5
//!
//! [train]
//! epochs = 30
//! batch_size = 32
//! lr_start = 0.01
//! lr_end = 0.001
//! momentum = 0.9
//! weight_decay = 0.0001
//!
//! [encoder]
//! beta = 64
//! M = 5
//! anchor_method = uniform
//! distance = squared_euclidean
//! ridge = 1e-6
//!
//! [eval]
//! repetitions = 10
//! train_fraction = 0.8
//! val_fraction = 0
//! test_fraction = 0.2
//! patches_per_image = 50
//! stride = 16
//! seed = 0
//! ```
//!
//! Every key is optional and defaults as shown; unknown sections or keys
//! are rejected. A relative `manifest` path is resolved against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use pqr_core::harness::{ExperimentConfig, SplitFractions};
use pqr_core::lab::{DatasetConfig, DistortionKind, OpinionModel};
use pqr_core::network::{ArchConfig, Head};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Manifest(PathBuf),
    Generate(DatasetConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub experiment: ExperimentConfig,
}

const KEYS: &[(&str, &[&str])] = &[
    ("dataset", &["manifest", "sources", "size", "kinds", "levels", "sigma", "subjects", "seed"]),
    ("arch", &["preset", "dropout"]),
    ("train", &["epochs", "batch_size", "lr_start", "lr_end", "momentum", "weight_decay"]),
    ("encoder", &["beta", "M", "anchor_method", "distance", "ridge"]),
    (
        "eval",
        &["repetitions", "train_fraction", "val_fraction", "test_fraction", "patches_per_image", "stride", "seed"],
    ),
];

fn parse<T: std::str::FromStr>(section: &str, key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("line {line}: [{section}] {key} = {value:?}: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut manifest = None;
        let mut data = DatasetConfig::default();
        let mut exp = ExperimentConfig::default();
        let mut preset = "desk".to_string();
        let mut dropout = None;
        let mut fractions = SplitFractions::default();
        let mut section: Option<&str> = None;
        let mut seen = std::collections::HashSet::new();

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                let known = KEYS.iter().find(|(s, _)| *s == name);
                section = Some(known.ok_or_else(|| anyhow!("line {line_no}: unknown section [{name}]"))?.0);
                continue;
            }
            let sec = section.ok_or_else(|| anyhow!("line {line_no}: key outside any [section]"))?;
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| anyhow!("line {line_no}: expected key = value"))?;
            let allowed = KEYS.iter().find(|(s, _)| *s == sec).unwrap().1;
            if !allowed.contains(&key) {
                bail!("line {line_no}: unknown key {key:?} in [{sec}] (allowed: {})", allowed.join(", "));
            }
            if !seen.insert((sec, key)) {
                bail!("line {line_no}: [{sec}] {key} given twice");
            }
            let p = |_: ()| (sec, key, value, line_no);
            let (s, k, v, l) = p(());
            match (s, k) {
                ("dataset", "manifest") => manifest = Some(base.join(v)),
                ("dataset", "sources") => data.sources = parse(s, k, v, l)?,
                ("dataset", "size") => data.size = parse(s, k, v, l)?,
                ("dataset", "kinds") => {
                    data.kinds = v
                        .split(',')
                        .map(|t| parse::<DistortionKind>(s, k, t.trim(), l))
                        .collect::<Result<_>>()?
                }
                ("dataset", "levels") => data.levels = parse(s, k, v, l)?,
                ("dataset", "sigma") => data.opinions.sigma = parse(s, k, v, l)?,
                ("dataset", "subjects") => data.opinions.subjects = parse(s, k, v, l)?,
                ("dataset", "seed") => data.seed = parse(s, k, v, l)?,
                ("arch", "preset") => preset = v.to_string(),
                ("arch", "dropout") => dropout = Some(parse(s, k, v, l)?),
                ("train", "epochs") => exp.train.epochs = parse(s, k, v, l)?,
                ("train", "batch_size") => exp.train.batch_size = parse(s, k, v, l)?,
                ("train", "lr_start") => exp.train.lr_start = parse(s, k, v, l)?,
                ("train", "lr_end") => exp.train.lr_end = parse(s, k, v, l)?,
                ("train", "momentum") => exp.train.momentum = parse(s, k, v, l)?,
                ("train", "weight_decay") => exp.train.weight_decay = parse(s, k, v, l)?,
                ("encoder", "beta") => exp.encoder.beta = parse(s, k, v, l)?,
                ("encoder", "M") => exp.encoder.m = parse(s, k, v, l)?,
                ("encoder", "anchor_method") => exp.encoder.method = parse(s, k, v, l)?,
                ("encoder", "distance") => exp.encoder.distance = parse(s, k, v, l)?,
                ("encoder", "ridge") => exp.ridge = parse(s, k, v, l)?,
                ("eval", "repetitions") => exp.repetitions = parse(s, k, v, l)?,
                ("eval", "train_fraction") => fractions.train = parse(s, k, v, l)?,
                ("eval", "val_fraction") => fractions.val = parse(s, k, v, l)?,
                ("eval", "test_fraction") => fractions.test = parse(s, k, v, l)?,
                ("eval", "patches_per_image") => exp.patches_per_image = parse(s, k, v, l)?,
                ("eval", "stride") => exp.test_stride = parse(s, k, v, l)?,
                ("eval", "seed") => exp.seed = parse(s, k, v, l)?,
                _ => unreachable!("key table and match arms agree"),
            }
        }

        let mut arch = ArchConfig::preset(&preset, Head::Pqr(exp.encoder.m))?;
        if let Some(d) = dropout {
            arch.dropout = d;
        }
        data.patch_size = arch.input_size;
        OpinionModel::new(data.opinions.sigma, data.opinions.subjects)?;
        exp.arch = arch;
        exp.fractions = fractions;
        exp.validate()?;
        Ok(RunConfig {
            dataset: match manifest {
                Some(p) => DatasetSource::Manifest(p),
                None => DatasetSource::Generate(data),
            },
            experiment: exp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pqr_core::anchors::AnchorMethod;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse(
            "[dataset]\nsources = 6 # tiny\n[encoder]\nbeta=16\nanchor_method = lloyd_max\n[eval]\nrepetitions=2\n",
            Path::new("/tmp"),
        )
        .unwrap();
        let DatasetSource::Generate(d) = &cfg.dataset else { panic!() };
        assert_eq!(d.sources, 6);
        assert_eq!(cfg.experiment.encoder.beta, 16.0);
        assert_eq!(cfg.experiment.encoder.method, AnchorMethod::LloydMax);
        assert_eq!(cfg.experiment.repetitions, 2);
        assert_eq!(cfg.experiment.train.epochs, 30);
    }

    #[test]
    fn manifest_is_relative_to_config() {
        let cfg = RunConfig::parse("[dataset]\nmanifest = d/m.tsv\n", Path::new("/x/y")).unwrap();
        assert_eq!(cfg.dataset, DatasetSource::Manifest(PathBuf::from("/x/y/d/m.tsv")));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let base = Path::new(".");
        for bad in [
            "[dataset]\ncolour = red\n",
            "[optimizer]\n",
            "epochs = 3\n",
            "[train]\nepochs\n",
            "[train]\nepochs = many\n",
            "[train]\nepochs = 2\nepochs = 3\n",
            "[encoder]\nM = 1\n",
        ] {
            assert!(RunConfig::parse(bad, base).is_err(), "{bad:?}");
        }
    }
}
