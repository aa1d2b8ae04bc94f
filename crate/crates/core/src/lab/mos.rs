//! Synthetic subjective scores.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::DistortionSpec;
use crate::error::{Error, Result};

pub const QUALITY_MIN: f64 = 0.05;
pub const QUALITY_MAX: f64 = 0.95;
/// Decay rate of quality with severity.
pub const QUALITY_DECAY: f64 = 3.0;

/// A panel of `subjects` raters whose opinions scatter around the true
/// quality with standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpinionModel {
    pub sigma: f64,
    pub subjects: usize,
}

impl Default for OpinionModel {
    fn default() -> Self {
        OpinionModel {
            sigma: 0.19,
            subjects: 35,
        }
    }
}

impl OpinionModel {
    pub fn new(sigma: f64, subjects: usize) -> Result<Self> {
        let m = OpinionModel { sigma, subjects };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || self.subjects == 0 {
            return Err(Error::InvalidParameter(format!(
                "opinion model needs sigma >= 0 and at least one subject, got {} and {}",
                self.sigma, self.subjects
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticScore {
    pub true_quality: f64,
    pub mos: f64,
    pub opinion_std: f64,
}

/// `exp(-3 s)` mapped affinely so severity 0 gives 0.95 and severity 1 gives 0.05.
pub fn true_quality(severity: f64) -> f64 {
    let floor = (-QUALITY_DECAY).exp();
    QUALITY_MIN + (QUALITY_MAX - QUALITY_MIN) * ((-QUALITY_DECAY * severity).exp() - floor) / (1.0 - floor)
}

/// MOS is the mean of `subjects` normal opinions, clamped to `[0, 1]`;
/// `opinion_std` is their sample standard deviation (0 for one subject).
pub fn synth_mos(spec: &DistortionSpec, opinions: &OpinionModel, seed: u64) -> Result<SyntheticScore> {
    opinions.validate()?;
    if !(0.0..=1.0).contains(&spec.severity) {
        return Err(Error::InvalidParameter(format!("severity {} outside [0, 1]", spec.severity)));
    }
    let y = true_quality(spec.severity);
    if opinions.sigma == 0.0 {
        return Ok(SyntheticScore {
            true_quality: y,
            mos: y,
            opinion_std: 0.0,
        });
    }
    let normal = Normal::new(y, opinions.sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..opinions.subjects).map(|_| normal.sample(&mut rng)).collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let std = if draws.len() > 1 {
        (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SyntheticScore {
        true_quality: y,
        mos: mean.clamp(0.0, 1.0),
        opinion_std: std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::DistortionKind;

    fn spec(s: f64) -> DistortionSpec {
        DistortionSpec::new(DistortionKind::GaussianBlur, s, 0).unwrap()
    }

    #[test]
    fn endpoints_without_noise() {
        let quiet = OpinionModel::new(0.0, 35).unwrap();
        let a = synth_mos(&spec(0.0), &quiet, 1).unwrap();
        assert!((a.true_quality - 0.95).abs() < 1e-15);
        assert_eq!(a.mos, a.true_quality);
        let b = synth_mos(&spec(1.0), &quiet, 1).unwrap();
        assert!((b.true_quality - 0.05).abs() < 1e-15);
    }

    #[test]
    fn strictly_decreasing_over_grid() {
        let quiet = OpinionModel::new(0.0, 1).unwrap();
        let grid: Vec<f64> = (0..=100)
            .map(|i| synth_mos(&spec(i as f64 / 100.0), &quiet, 0).unwrap().mos)
            .collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn single_subject_has_zero_spread() {
        let one = OpinionModel::new(0.2, 1).unwrap();
        assert_eq!(synth_mos(&spec(0.5), &one, 3).unwrap().opinion_std, 0.0);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(OpinionModel::new(-0.1, 5).is_err());
        assert!(OpinionModel::new(0.1, 0).is_err());
    }
}
