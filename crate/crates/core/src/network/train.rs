use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Head, Mode, Network, Targets};
use crate::codec::{encode_batch, EncoderConfig};
use crate::error::{invalid, Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Per-epoch learning rates are log-spaced from `lr_start` to `lr_end`.
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr_start: 1e-2,
            lr_end: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid("weight_decay must be nonnegative"));
        }
        log_spaced_rates(self.lr_start, self.lr_end, self.epochs).map(|_| ())
    }
}

/// `epochs` rates spaced evenly in log scale from `start` to `end`. Equal
/// endpoints (including zero) give a constant schedule.
pub fn log_spaced_rates(start: f64, end: f64, epochs: usize) -> Result<Vec<f64>> {
    if !(start >= end && end >= 0.0 && start.is_finite()) {
        return Err(invalid(format!(
            "learning rates need lr_start >= lr_end >= 0, got {start} and {end}"
        )));
    }
    if start == end || epochs == 1 {
        return Ok(vec![start; epochs]);
    }
    if end == 0.0 {
        return Err(invalid("a decaying log-spaced schedule needs lr_end > 0"));
    }
    let (a, b) = (start.ln(), end.ln());
    Ok((0..epochs)
        .map(|e| (a + (b - a) * e as f64 / (epochs - 1) as f64).exp())
        .collect())
}

/// SGD with momentum and L2 weight decay:
/// `v <- mu v - lr (g + wd w)`, `w <- w + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    velocity: Vec<f64>,
    momentum: f64,
    weight_decay: f64,
}

impl Optimizer {
    pub fn new(n_params: usize, momentum: f64, weight_decay: f64) -> Self {
        Optimizer {
            velocity: vec![0.0; n_params],
            momentum,
            weight_decay,
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != params.len() || self.velocity.len() != params.len() {
            return Err(Error::InvalidInput(format!(
                "gradient of {} values for {} parameters",
                grad.len(),
                params.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericalFailure("non-finite gradient in sgd step".into()));
        }
        for ((w, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v - lr * (g + self.weight_decay * *w);
            *w += *v;
        }
        Ok(())
    }
}

/// Training patches stored contiguously, each with the score of its source
/// image.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    input_len: usize,
    inputs: Vec<f64>,
    scores: Vec<f64>,
}

impl PatchSet {
    pub fn new(input_len: usize) -> Self {
        PatchSet {
            input_len,
            inputs: Vec::new(),
            scores: Vec::new(),
        }
    }

    pub fn push(&mut self, patch: &[f64], score: f64) -> Result<()> {
        if patch.len() != self.input_len {
            return Err(Error::InvalidInput(format!(
                "patch of {} values, expected {}",
                patch.len(),
                self.input_len
            )));
        }
        self.inputs.extend_from_slice(patch);
        self.scores.push(score);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_len..(i + 1) * self.input_len]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

pub fn train(
    net: Network,
    data: &PatchSet,
    cfg: &TrainConfig,
    encoder: Option<&EncoderConfig>,
) -> Result<(Network, Vec<EpochStats>)> {
    train_with(net, data, cfg, encoder, |_, _| Ok(()))
}

/// Mini-batch training; `on_epoch` sees the network after every epoch.
pub fn train_with<F>(
    mut net: Network,
    data: &PatchSet,
    cfg: &TrainConfig,
    encoder: Option<&EncoderConfig>,
    mut on_epoch: F,
) -> Result<(Network, Vec<EpochStats>)>
where
    F: FnMut(&EpochStats, &Network) -> Result<()>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(invalid("training set is empty"));
    }
    if data.input_len() != net.input_len() {
        return Err(Error::InvalidInput("patch size does not match the network input".into()));
    }
    let pqr_targets = match (net.head(), encoder) {
        (Head::Pqr(m), Some(enc)) => {
            if enc.len() != m {
                return Err(invalid(format!("encoder has {} anchors, head has {m}", enc.len())));
            }
            Some(encode_batch(data.scores(), enc)?)
        }
        (Head::Sqr, None) => None,
        (Head::Pqr(_), None) => return Err(invalid("the pqr head needs an encoder")),
        (Head::Sqr, Some(_)) => return Err(invalid("the sqr head takes no encoder")),
    };

    let rates = log_spaced_rates(cfg.lr_start, cfg.lr_end, cfg.epochs)?;
    let mut opt = Optimizer::new(net.n_params(), cfg.momentum, cfg.weight_decay);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size * data.input_len());
    let mut batch_pqr = Vec::with_capacity(cfg.batch_size);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for (e, &lr) in rates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[e as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch_pqr.clear();
            batch_y.clear();
            for &i in idx {
                batch.extend_from_slice(data.patch(i));
                match &pqr_targets {
                    Some(t) => batch_pqr.push(t[i].clone()),
                    None => batch_y.push(data.scores()[i]),
                }
            }
            let targets = match &pqr_targets {
                Some(_) => Targets::Pqr(&batch_pqr),
                None => Targets::Scalar(&batch_y),
            };
            let mode = Mode::Train {
                dropout_seed: derive_seed(cfg.seed, &[e as u64, b as u64, 1]),
            };
            let wrap = |source: Error| Error::Training {
                epoch: e + 1,
                batch: b,
                source: Box::new(source),
            };
            let lg = net.loss_and_grad(&batch, targets, mode).map_err(wrap)?;
            opt.step(net.params_mut(), &lg.grad, lr).map_err(wrap)?;
            total += lg.loss * idx.len() as f64;
        }
        let stats = EpochStats {
            epoch: e + 1,
            lr,
            mean_loss: total / data.len() as f64,
        };
        trace.push(stats);
        on_epoch(&stats, &net)?;
    }
    Ok((net, trace))
}

/// Loss trace as CSV: `epoch,lr,mean_loss`.
pub fn trace_csv(trace: &[EpochStats]) -> String {
    let mut out = String::from("epoch,lr,mean_loss\n");
    for s in trace {
        out.push_str(&format!("{},{},{}\n", s.epoch, s.lr, s.mean_loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_spacing() {
        let r = log_spaced_rates(1e-2, 1e-3, 3).unwrap();
        assert!((r[0] - 1e-2).abs() < 1e-17);
        assert!((r[1] - 10f64.powf(-2.5)).abs() < 1e-15);
        assert!((r[2] - 1e-3).abs() < 1e-17);
        assert_eq!(log_spaced_rates(0.0, 0.0, 4).unwrap(), vec![0.0; 4]);
        assert!(log_spaced_rates(1e-3, 1e-2, 3).is_err());
        assert!(log_spaced_rates(1e-2, 0.0, 3).is_err());
    }

    #[test]
    fn sgd_zero_rate_is_identity() {
        let mut w = vec![0.3, -1.2];
        let mut opt = Optimizer::new(2, 0.9, 1e-4);
        opt.step(&mut w, &[5.0, -7.0], 0.0).unwrap();
        assert_eq!(w, vec![0.3, -1.2]);
    }

    #[test]
    fn sgd_plain_step() {
        let mut w = vec![1.0];
        let mut opt = Optimizer::new(1, 0.0, 0.0);
        opt.step(&mut w, &[2.0], 0.1).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_two_steps() {
        let mut w = vec![0.0];
        let mut opt = Optimizer::new(1, 0.9, 0.0);
        opt.step(&mut w, &[1.0], 0.1).unwrap();
        opt.step(&mut w, &[1.0], 0.1).unwrap();
        // v1 = -0.1, v2 = 0.9 * -0.1 - 0.1 = -0.19
        assert!((w[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_non_finite() {
        let mut w = vec![0.0];
        let mut opt = Optimizer::new(1, 0.9, 0.0);
        assert!(matches!(
            opt.step(&mut w, &[f64::INFINITY], 0.1),
            Err(Error::NumericalFailure(_))
        ));
    }

    #[test]
    fn trace_csv_format() {
        let csv = trace_csv(&[EpochStats {
            epoch: 1,
            lr: 0.01,
            mean_loss: 0.5,
        }]);
        assert_eq!(csv, "epoch,lr,mean_loss\n1,0.01,0.5\n");
    }
}
