use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lab::{DatasetManifest, Split};

/// Fractions of source contents assigned to each split. Sources left over
/// when the fractions sum to less than one stay unassigned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            val: 0.0,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = SplitFractions { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) || all.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions {}/{}/{} must be in [0, 1] and sum to at most 1",
                self.train, self.val, self.test
            )));
        }
        if self.train == 0.0 || self.test == 0.0 {
            return Err(Error::InvalidParameter("train and test fractions must be positive".into()));
        }
        Ok(())
    }

    /// Source counts per split for `n` sources. Counts are rounded; a split
    /// with a positive fraction that rounds to nothing takes one source from
    /// the largest split.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let round = |f: f64| (f * n as f64).round() as usize;
        let train = round(self.train).min(n);
        let val = round(self.val).min(n - train);
        let test = round(self.test).min(n - train - val);
        let mut c = [train, val, test];
        let fracs = [self.train, self.val, self.test];
        for i in 0..3 {
            if fracs[i] > 0.0 && c[i] == 0 {
                let (big, &count) = c.iter().enumerate().max_by_key(|(_, v)| **v).unwrap();
                if count < 2 {
                    let name = ["train", "val", "test"][i];
                    return Err(Error::InvalidParameter(format!(
                        "{n} sources leave the {name} split empty at fraction {}",
                        fracs[i]
                    )));
                }
                c[big] -= 1;
                c[i] = 1;
            }
        }
        Ok((c[0], c[1], c[2]))
    }
}

/// Shuffles the source ids with `seed` and assigns whole sources to splits,
/// so no content appears on both sides.
pub fn split_by_content(manifest: &DatasetManifest, fractions: SplitFractions, seed: u64) -> Result<DatasetManifest> {
    let mut sources = manifest.sources();
    let (train, val, test) = fractions.counts(sources.len())?;
    sources.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assign = |src: &str| {
        let pos = sources.iter().position(|s| s == src).unwrap();
        if pos < train {
            Some(Split::Train)
        } else if pos < train + val {
            Some(Split::Val)
        } else if pos < train + val + test {
            Some(Split::Test)
        } else {
            None
        }
    };
    let mut out = manifest.clone();
    for r in &mut out.images {
        r.split = assign(&r.source);
    }
    Ok(out)
}
