use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::{apply_distortion, generate_sources, synth_mos, DistortionKind, DistortionSpec, Image, OpinionModel};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const MANIFEST_HEADER: &str = "# pqr manifest v1";
pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParameter(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub source: String,
    pub spec: DistortionSpec,
    /// 1-based severity level within the dataset.
    pub level: usize,
    pub true_quality: f64,
    pub mos: f64,
    pub opinion_std: f64,
    pub split: Option<Split>,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRecord {
    pub image: usize,
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

/// Line-delimited, tab-separated dataset description. Field order:
///
/// ```text
/// image  id source kind severity level seed true_quality mos opinion_std split path
/// patch  image_id x y size
/// ```
///
/// `split` is `-` when unassigned. Lines starting with `#` are comments and
/// are kept verbatim.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub comments: Vec<String>,
    pub images: Vec<ImageRecord>,
    pub patches: Vec<PatchRecord>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut source_split: BTreeMap<&str, Option<Split>> = BTreeMap::new();
        for (i, r) in self.images.iter().enumerate() {
            let fail = |msg: String| Err(Error::at(i, Error::InvalidInput(msg)));
            if !ids.insert(r.id.as_str()) {
                return fail(format!("duplicate image id {:?}", r.id));
            }
            if r.id.contains(char::is_whitespace) || r.source.contains(char::is_whitespace) {
                return fail(format!("id {:?} contains whitespace", r.id));
            }
            if !(0.0..=1.0).contains(&r.mos) || !(0.0..=1.0).contains(&r.true_quality) {
                return fail(format!("image {:?}: scores must lie in [0, 1]", r.id));
            }
            if let Some(prev) = source_split.insert(&r.source, r.split) {
                if prev != r.split {
                    return fail(format!("source {:?} appears in more than one split", r.source));
                }
            }
        }
        for (i, p) in self.patches.iter().enumerate() {
            if p.image >= self.images.len() {
                return Err(Error::at(i, Error::InvalidInput("patch references a missing image".into())));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.images.iter().position(|r| r.id == id)
    }

    pub fn sources(&self) -> Vec<String> {
        let mut s: Vec<String> = self.images.iter().map(|r| r.source.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Indices of the images in `split`.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.images.len())
            .filter(|&i| self.images[i].split == Some(split))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for c in &self.comments {
            out.push_str(c);
            out.push('\n');
        }
        for r in &self.images {
            out.push_str(&format!(
                "image\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.id,
                r.source,
                r.spec.kind,
                r.spec.severity,
                r.level,
                r.spec.seed,
                r.true_quality,
                r.mos,
                r.opinion_std,
                r.split.map_or("-", |s| s.as_str()),
                r.path
            ));
        }
        for p in &self.patches {
            out.push_str(&format!(
                "patch\t{}\t{}\t{}\t{}\n",
                self.images[p.image].id, p.x, p.y, p.size
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == MANIFEST_HEADER => {}
            _ => return Err(Error::UnsupportedFormat(format!("manifest must start with {MANIFEST_HEADER:?}"))),
        }
        let mut m = DatasetManifest::default();
        let mut ids: BTreeMap<String, usize> = BTreeMap::new();
        for (n, line) in lines {
            let line_no = n + 1;
            let bad = |reason: String| Error::Parse { line: line_no, reason };
            if line.starts_with('#') {
                m.comments.push(line.to_string());
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let num = |i: usize| -> Result<f64> {
                f[i].parse().map_err(|_| bad(format!("field {i} is not a number: {:?}", f[i])))
            };
            let int = |i: usize| -> Result<usize> {
                f[i].parse().map_err(|_| bad(format!("field {i} is not an integer: {:?}", f[i])))
            };
            match (f[0], f.len()) {
                ("image", 12) => {
                    let kind: DistortionKind = f[3].parse().map_err(|e: Error| bad(e.to_string()))?;
                    let seed = f[6].parse().map_err(|_| bad(format!("bad seed {:?}", f[6])))?;
                    let spec = DistortionSpec::new(kind, num(4)?, seed).map_err(|e| bad(e.to_string()))?;
                    let split = match f[10] {
                        "-" => None,
                        s => Some(s.parse().map_err(|e: Error| bad(e.to_string()))?),
                    };
                    if ids.insert(f[1].to_string(), m.images.len()).is_some() {
                        return Err(bad(format!("duplicate image id {:?}", f[1])));
                    }
                    m.images.push(ImageRecord {
                        id: f[1].to_string(),
                        source: f[2].to_string(),
                        spec,
                        level: int(5)?,
                        true_quality: num(7)?,
                        mos: num(8)?,
                        opinion_std: num(9)?,
                        split,
                        path: f[11].to_string(),
                    });
                }
                ("patch", 5) => {
                    let image = *ids
                        .get(f[1])
                        .ok_or_else(|| bad(format!("patch references unknown image {:?}", f[1])))?;
                    m.patches.push(PatchRecord {
                        image,
                        x: int(2)?,
                        y: int(3)?,
                        size: int(4)?,
                    });
                }
                (tag, n) => return Err(bad(format!("unrecognised {tag:?} record with {n} fields"))),
            }
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub sources: usize,
    pub size: usize,
    /// Smallest patch the dataset must support.
    pub patch_size: usize,
    pub kinds: Vec<DistortionKind>,
    pub levels: usize,
    pub opinions: OpinionModel,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            sources: 60,
            size: 48,
            patch_size: 32,
            kinds: DistortionKind::ALL.to_vec(),
            levels: 3,
            opinions: OpinionModel::default(),
            seed: 0,
        }
    }
}

/// Severities evenly spaced over `[0.2, 0.8]`; a single level sits at 0.5.
pub fn level_severities(levels: usize) -> Vec<f64> {
    match levels {
        0 => Vec::new(),
        1 => vec![0.5],
        n => (0..n).map(|i| 0.2 + 0.6 * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Images aligned index-for-index with `manifest.images`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<Image>,
}

/// Every source crossed with every kind and level. Randomness for image
/// `(source, kind, level)` comes from streams derived from exactly that
/// triple, so the result does not depend on scheduling.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.levels == 0 {
        return Err(Error::InvalidParameter("levels must be at least 1".into()));
    }
    if cfg.kinds.is_empty() {
        return Err(Error::InvalidParameter("at least one distortion kind is required".into()));
    }
    let mut kinds = cfg.kinds.clone();
    kinds.sort();
    kinds.dedup();
    if kinds.len() != cfg.kinds.len() {
        return Err(Error::InvalidParameter("distortion kinds repeat".into()));
    }
    cfg.opinions.validate()?;
    let sources = generate_sources(cfg.sources, cfg.size, cfg.patch_size, derive_seed(cfg.seed, &[0]))?;
    let severities = level_severities(cfg.levels);

    let per_source: Vec<Result<Vec<(ImageRecord, Image)>>> = sources
        .par_iter()
        .enumerate()
        .map(|(si, src)| {
            let mut out = Vec::with_capacity(cfg.kinds.len() * cfg.levels);
            for kind in &cfg.kinds {
                let code = DistortionKind::ALL.iter().position(|k| k == kind).unwrap() as u64;
                for (li, &severity) in severities.iter().enumerate() {
                    let tags = [si as u64, code, li as u64];
                    let spec = DistortionSpec::new(*kind, severity, derive_seed(cfg.seed, &[1, tags[0], tags[1], tags[2]]))?;
                    let mut img = apply_distortion(&src.image, &spec)?;
                    img.quantize_8bit();
                    let score = synth_mos(&spec, &cfg.opinions, derive_seed(cfg.seed, &[2, tags[0], tags[1], tags[2]]))?;
                    let id = format!("{}_{}_l{}", src.id, kind, li + 1);
                    out.push((
                        ImageRecord {
                            path: format!("images/{id}.ppm"),
                            id,
                            source: src.id.clone(),
                            spec,
                            level: li + 1,
                            true_quality: score.true_quality,
                            mos: score.mos,
                            opinion_std: score.opinion_std,
                            split: None,
                        },
                        img,
                    ));
                }
            }
            Ok(out)
        })
        .collect();

    let kinds_label: Vec<&str> = cfg.kinds.iter().map(|k| k.as_str()).collect();
    let mut manifest = DatasetManifest {
        comments: vec![format!(
            "# generator sources={} size={} kinds={} levels={} sigma={} subjects={} seed={}",
            cfg.sources,
            cfg.size,
            kinds_label.join(","),
            cfg.levels,
            cfg.opinions.sigma,
            cfg.opinions.subjects,
            cfg.seed
        )],
        ..Default::default()
    };
    let mut images = Vec::new();
    for block in per_source {
        for (rec, img) in block? {
            manifest.images.push(rec);
            images.push(img);
        }
    }
    Ok(Dataset { manifest, images })
}

impl Dataset {
    /// Writes every image and then the manifest; returns the manifest path.
    /// The manifest is written last, so a failed save never leaves a
    /// manifest pointing at missing images.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        self.manifest.validate()?;
        for (rec, img) in self.manifest.images.iter().zip(&self.images) {
            img.write(&dir.join(&rec.path))?;
        }
        let path = dir.join(MANIFEST_FILE);
        crate::io::write_atomic(&path, self.manifest.to_text().as_bytes())?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest = DatasetManifest::parse(&text)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let images = manifest
            .images
            .par_iter()
            .map(|r| {
                Image::read(&dir.join(&r.path)).map_err(|e| match e {
                    Error::Io { path, source } => Error::io(
                        path,
                        std::io::Error::new(source.kind(), format!("image {}: {source}", r.id)),
                    ),
                    other => Error::InvalidInput(format!("image {}: {other}", r.id)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kinds: Vec<DistortionKind>, sigma: f64) -> DatasetConfig {
        DatasetConfig {
            sources: 2,
            size: 40,
            patch_size: 32,
            kinds,
            levels: 3,
            opinions: OpinionModel::new(sigma, 35).unwrap(),
            seed: 5,
        }
    }

    #[test]
    fn full_factorial() {
        let two = vec![DistortionKind::GaussianBlur, DistortionKind::Awgn];
        let d = build_dataset(&small(two, 0.19)).unwrap();
        assert_eq!(d.len(), 12);
        assert_eq!(d.manifest.sources(), vec!["s000", "s001"]);
        assert_eq!(d.manifest.images[0].id, "s000_gaussian_blur_l1");
    }

    #[test]
    fn deterministic_manifest() {
        let cfg = small(DistortionKind::ALL.to_vec(), 0.19);
        let a = build_dataset(&cfg).unwrap();
        let b = build_dataset(&cfg).unwrap();
        assert_eq!(a.manifest.to_text(), b.manifest.to_text());
        assert_eq!(a.images, b.images);
    }

    #[test]
    fn noiseless_mos_decreases_with_level() {
        let d = build_dataset(&small(DistortionKind::ALL.to_vec(), 0.0)).unwrap();
        for block in d.manifest.images.chunks(3) {
            assert!(block[0].mos > block[1].mos && block[1].mos > block[2].mos);
            assert_eq!(block.iter().map(|r| r.level).collect::<Vec<_>>(), vec![1, 2, 3]);
        }
    }

    #[test]
    fn severities() {
        assert_eq!(level_severities(1), vec![0.5]);
        let s = level_severities(3);
        assert!((s[0] - 0.2).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15 && (s[2] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = build_dataset(&small(vec![DistortionKind::ContrastDecrement], 0.19)).unwrap();
        let path = d.save(dir.path()).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn missing_image_names_id() {
        let dir = tempfile::tempdir().unwrap();
        let d = build_dataset(&small(vec![DistortionKind::Awgn], 0.19)).unwrap();
        let path = d.save(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join(&d.manifest.images[1].path)).unwrap();
        let err = Dataset::load(&path).unwrap_err().to_string();
        assert!(err.contains(&d.manifest.images[1].id), "{err}");
    }

    #[test]
    fn manifest_parse_errors() {
        assert!(matches!(DatasetManifest::parse("nope\n"), Err(Error::UnsupportedFormat(_))));
        let text = format!("{MANIFEST_HEADER}\npatch\tx\t0\t0\t32\n");
        assert!(matches!(DatasetManifest::parse(&text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn manifest_rejects_source_in_two_splits() {
        let mut d = build_dataset(&small(vec![DistortionKind::Awgn], 0.19)).unwrap();
        d.manifest.images[0].split = Some(Split::Train);
        d.manifest.images[1].split = Some(Split::Test);
        assert!(d.manifest.validate().is_err());
        d.manifest.images[1].split = Some(Split::Train);
        d.manifest.images[2].split = Some(Split::Train);
        d.manifest.patches.push(PatchRecord { image: 0, x: 1, y: 2, size: 32 });
        let back = DatasetManifest::parse(&d.manifest.to_text()).unwrap();
        assert_eq!(back, d.manifest);
    }
}
