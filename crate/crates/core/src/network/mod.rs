//! A small convolutional network trained from scratch, with either a softmax
//! head over the quality anchors or a scalar regression head.
//!
//! All parameters live in one flat `Vec<f64>`; gradients share that layout,
//! which keeps the optimizer, checkpoints and finite-difference checks simple.

mod arch;
mod checkpoint;
mod layers;
mod train;

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

pub use arch::{ArchConfig, ConvSpec, Head};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{log_spaced_rates, trace_csv, train, train_with, EpochStats, Optimizer, PatchSet, TrainConfig};

use crate::codec::{softmax, PqrVector};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use arch::StageShape;

/// Samples per parallel work unit. Fixed so the reduction order, and hence
/// the summed gradient, does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; sample `i` of the batch draws its mask from
    /// `derive_seed(dropout_seed, i)`.
    Train { dropout_seed: u64 },
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Pqr(PqrVector),
    Scalar(f64),
}

impl Prediction {
    pub fn as_pqr(&self) -> Option<&PqrVector> {
        match self {
            Prediction::Pqr(q) => Some(q),
            Prediction::Scalar(_) => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Prediction::Scalar(v) => Some(*v),
            Prediction::Pqr(_) => None,
        }
    }
}

/// Training targets, one per sample.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Pqr(&'a [PqrVector]),
    Scalar(&'a [f64]),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Pqr(t) => t.len(),
            Targets::Scalar(t) => t.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossAndGrad {
    /// Mean loss over the batch.
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Gradient of the loss with respect to the output-layer pre-activations,
    /// `samples x outputs`, row-major.
    pub output_grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct FcLayout {
    weights: Range<usize>,
    bias: Range<usize>,
    n_in: usize,
    n_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    stages: Vec<(StageShape, Range<usize>, Range<usize>)>,
    hidden: Option<FcLayout>,
    output: FcLayout,
    n_params: usize,
}

impl Layout {
    fn new(arch: &ArchConfig) -> Result<Self> {
        let shapes = arch.stage_sizes()?;
        let mut offset = 0;
        let mut take = |n: usize| {
            let r = offset..offset + n;
            offset += n;
            r
        };
        let mut stages = Vec::with_capacity(shapes.len());
        for s in &shapes {
            let w = take(s.out_channels * s.in_channels * s.kernel * s.kernel);
            let b = take(s.out_channels);
            stages.push((*s, w, b));
        }
        let last = shapes.last().unwrap();
        let features = last.out_channels * last.pool_size * last.pool_size;
        let hidden = (arch.fc_width > 0).then(|| FcLayout {
            weights: take(arch.fc_width * features),
            bias: take(arch.fc_width),
            n_in: features,
            n_out: arch.fc_width,
        });
        let n_in = if arch.fc_width > 0 { arch.fc_width } else { features };
        let n_out = arch.head.output_len();
        let output = FcLayout {
            weights: take(n_out * n_in),
            bias: take(n_out),
            n_in,
            n_out,
        };
        Ok(Layout {
            stages,
            hidden,
            output,
            n_params: offset,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: ArchConfig,
    seed: u64,
    layout: Layout,
    params: Vec<f64>,
}

/// Per-sample activations kept for the backward pass.
#[derive(Default)]
struct Cache {
    /// Post-ReLU output of each stage.
    stage_out: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    conv_out: Vec<Vec<f64>>,
    hidden: Vec<f64>,
    /// Dropout multipliers applied to the output-layer input (empty in eval).
    mask: Vec<f64>,
    dropped: Vec<f64>,
    logits: Vec<f64>,
    col: Vec<f64>,
}

impl Network {
    /// He-initialized network: weights ~ N(0, 2 / fan_in), biases zero.
    pub fn build(arch: ArchConfig, seed: u64) -> Result<Self> {
        let layout = Layout::new(&arch)?;
        let mut params = vec![0.0; layout.n_params];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: &Range<usize>, fan_in: usize, params: &mut [f64]| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            for p in &mut params[range.clone()] {
                *p = normal.sample(&mut rng);
            }
        };
        for (s, w, _) in &layout.stages {
            fill(w, s.in_channels * s.kernel * s.kernel, &mut params);
        }
        if let Some(h) = &layout.hidden {
            fill(&h.weights, h.n_in, &mut params);
        }
        fill(&layout.output.weights, layout.output.n_in, &mut params);
        Ok(Network {
            arch,
            seed,
            layout,
            params,
        })
    }

    /// Network with every parameter zero.
    pub fn zeros(arch: ArchConfig) -> Result<Self> {
        let layout = Layout::new(&arch)?;
        let params = vec![0.0; layout.n_params];
        Ok(Network {
            arch,
            seed: 0,
            layout,
            params,
        })
    }

    pub(crate) fn from_params(arch: ArchConfig, seed: u64, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(&arch)?;
        if params.len() != layout.n_params {
            return Err(Error::CorruptCheckpoint(format!(
                "{} parameters stored, architecture needs {}",
                params.len(),
                layout.n_params
            )));
        }
        Ok(Network {
            arch,
            seed,
            layout,
            params,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn head(&self) -> Head {
        self.arch.head
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.layout.n_params
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len()
    }

    /// Named parameter tensors with their shapes, in storage order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (i, (s, w, b)) in self.layout.stages.iter().enumerate() {
            out.push((
                format!("conv{i}.weight"),
                vec![s.out_channels, s.in_channels, s.kernel, s.kernel],
                &self.params[w.clone()],
            ));
            out.push((format!("conv{i}.bias"), vec![s.out_channels], &self.params[b.clone()]));
        }
        let mut fc = |name: &str, l: &FcLayout| {
            out.push((format!("{name}.weight"), vec![l.n_out, l.n_in], &self.params[l.weights.clone()]));
            out.push((format!("{name}.bias"), vec![l.n_out], &self.params[l.bias.clone()]));
        };
        if let Some(h) = &self.layout.hidden {
            fc("fc_hidden", h);
        }
        fc("fc_out", &self.layout.output);
        out
    }

    fn n_samples(&self, inputs: &[f64]) -> Result<usize> {
        let len = self.input_len();
        if inputs.is_empty() || inputs.len() % len != 0 {
            return Err(Error::InvalidInput(format!(
                "batch of {} values is not a positive multiple of the {len}-value patch size",
                inputs.len()
            )));
        }
        Ok(inputs.len() / len)
    }

    fn dropout_mask(&self, n: usize, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let p = self.arch.dropout;
        if p == 0.0 {
            return vec![1.0; n];
        }
        let keep = 1.0 / (1.0 - p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect()
    }

    fn forward_one(&self, x: &[f64], mode: Mode, index: usize, cache: &mut Cache) -> Result<()> {
        let p = &self.params;
        let n_stages = self.layout.stages.len();
        cache.stage_out.resize_with(n_stages, Vec::new);
        cache.argmax.resize_with(n_stages, Vec::new);
        cache.conv_out.resize_with(n_stages, Vec::new);
        for (i, (s, w, b)) in self.layout.stages.iter().enumerate() {
            let conv_len = s.out_channels * s.conv_size * s.conv_size;
            let pool_len = s.out_channels * s.pool_size * s.pool_size;
            let mut conv = std::mem::take(&mut cache.conv_out[i]);
            conv.resize(conv_len, 0.0);
            {
                let input = if i == 0 { x } else { &cache.stage_out[i - 1] };
                layers::conv_forward(input, s.in_channels, s.in_size, &p[w.clone()], &p[b.clone()], s.kernel, &mut conv, &mut cache.col);
            }
            let mut pooled = std::mem::take(&mut cache.stage_out[i]);
            pooled.resize(pool_len, 0.0);
            let mut arg = std::mem::take(&mut cache.argmax[i]);
            arg.resize(pool_len, 0);
            layers::maxpool_forward(&conv, s.out_channels, s.conv_size, &mut pooled, &mut arg);
            layers::relu_inplace(&mut pooled);
            check_finite(&pooled, || format!("conv stage {i} activations"))?;
            cache.conv_out[i] = conv;
            cache.stage_out[i] = pooled;
            cache.argmax[i] = arg;
        }
        let features = cache.stage_out.last().unwrap();
        let last_in: &[f64] = if let Some(h) = &self.layout.hidden {
            cache.hidden.resize(h.n_out, 0.0);
            layers::fc_forward(features, &p[h.weights.clone()], &p[h.bias.clone()], &mut cache.hidden);
            layers::relu_inplace(&mut cache.hidden);
            check_finite(&cache.hidden, || "hidden fc activations".to_string())?;
            &cache.hidden
        } else {
            features
        };
        match mode {
            Mode::Train { dropout_seed } => {
                cache.mask = self.dropout_mask(last_in.len(), derive_seed(dropout_seed, &[index as u64]));
                cache.dropped = last_in.iter().zip(&cache.mask).map(|(a, m)| a * m).collect();
            }
            Mode::Eval => {
                cache.mask.clear();
                cache.dropped.clear();
                cache.dropped.extend_from_slice(last_in);
            }
        }
        let o = &self.layout.output;
        cache.logits.resize(o.n_out, 0.0);
        layers::fc_forward(&cache.dropped, &p[o.weights.clone()], &p[o.bias.clone()], &mut cache.logits);
        check_finite(&cache.logits, || "output layer".to_string())?;
        Ok(())
    }

    fn prediction(&self, logits: &[f64]) -> Prediction {
        match self.arch.head {
            Head::Pqr(_) => Prediction::Pqr(PqrVector::from_softmax(softmax(logits))),
            Head::Sqr => Prediction::Scalar(logits[0]),
        }
    }

    /// Forward pass over a contiguous batch of patches (`n * input_len` values).
    pub fn forward(&self, inputs: &[f64], mode: Mode) -> Result<Vec<Prediction>> {
        let n = self.n_samples(inputs)?;
        let len = self.input_len();
        let chunks: Vec<Result<Vec<Prediction>>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut cache = Cache::default();
                let mut out = Vec::new();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    self.forward_one(&inputs[i * len..(i + 1) * len], mode, i, &mut cache)?;
                    out.push(self.prediction(&cache.logits));
                }
                Ok(out)
            })
            .collect();
        let mut preds = Vec::with_capacity(n);
        for c in chunks {
            preds.extend(c?);
        }
        Ok(preds)
    }

    /// Mean loss over the batch without gradients.
    pub fn loss(&self, inputs: &[f64], targets: Targets<'_>, mode: Mode) -> Result<f64> {
        let preds = self.forward(inputs, mode)?;
        self.check_targets(preds.len(), &targets)?;
        let mut total = 0.0;
        for (i, pred) in preds.iter().enumerate() {
            total += match (pred, &targets) {
                (Prediction::Pqr(q), Targets::Pqr(t)) => crate::codec::cross_entropy(&t[i], q)?,
                (Prediction::Scalar(v), Targets::Scalar(t)) => (v - t[i]).powi(2),
                _ => unreachable!("targets checked against head"),
            };
        }
        Ok(total / preds.len() as f64)
    }

    fn check_targets(&self, n: usize, targets: &Targets<'_>) -> Result<()> {
        if targets.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} targets for {n} samples",
                targets.len()
            )));
        }
        match (self.arch.head, targets) {
            (Head::Pqr(m), Targets::Pqr(t)) => {
                if let Some(i) = t.iter().position(|q| q.len() != m) {
                    return Err(Error::InvalidInput(format!(
                        "target {i} has {} anchors, head has {m}",
                        t[i].len()
                    )));
                }
                Ok(())
            }
            (Head::Sqr, Targets::Scalar(_)) => Ok(()),
            (head, _) => Err(Error::InvalidInput(format!("targets do not match the {head} head"))),
        }
    }

    /// Mean batch loss (cross-entropy for the PQR head, squared error for the
    /// scalar head) and its gradient by backpropagation.
    pub fn loss_and_grad(&self, inputs: &[f64], targets: Targets<'_>, mode: Mode) -> Result<LossAndGrad> {
        let n = self.n_samples(inputs)?;
        self.check_targets(n, &targets)?;
        let len = self.input_len();
        let n_out = self.layout.output.n_out;
        let scale = 1.0 / n as f64;

        let partial: Vec<Result<(f64, Vec<f64>, Vec<f64>)>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut cache = Cache::default();
                let mut scratch = Scratch::default();
                let mut grad = vec![0.0; self.layout.n_params];
                let mut loss = 0.0;
                let mut out_grad = Vec::new();
                let mut g = vec![0.0; n_out];
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let x = &inputs[i * len..(i + 1) * len];
                    self.forward_one(x, mode, i, &mut cache)?;
                    match targets {
                        Targets::Pqr(t) => {
                            let q = softmax(&cache.logits);
                            let target = t[i].probs();
                            for m in 0..n_out {
                                if target[m] > 0.0 {
                                    if q[m] <= 0.0 {
                                        return Err(Error::DivergentLoss { index: m });
                                    }
                                    loss -= target[m] * q[m].ln();
                                }
                                g[m] = (q[m] - target[m]) * scale;
                            }
                        }
                        Targets::Scalar(t) => {
                            let r = cache.logits[0] - t[i];
                            loss += r * r;
                            g[0] = 2.0 * r * scale;
                        }
                    }
                    out_grad.extend_from_slice(&g);
                    self.backward_one(x, &cache, &g, &mut grad, &mut scratch);
                }
                Ok((loss, grad, out_grad))
            })
            .collect();

        let mut loss = 0.0;
        let mut grad = vec![0.0; self.layout.n_params];
        let mut output_grad = Vec::with_capacity(n * n_out);
        for part in partial {
            let (l, g, o) = part?;
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
            output_grad.extend(o);
        }
        check_finite(&grad, || "gradient".to_string())?;
        Ok(LossAndGrad {
            loss: loss * scale,
            grad,
            output_grad,
        })
    }

    fn backward_one(&self, x: &[f64], cache: &Cache, g: &[f64], grad: &mut [f64], s: &mut Scratch) {
        let p = &self.params;
        let o = &self.layout.output;
        s.d_last.resize(o.n_in, 0.0);
        {
            let (dw, db) = split_two(grad, &o.weights, &o.bias);
            layers::fc_backward(&cache.dropped, &p[o.weights.clone()], g, dw, db, &mut s.d_last);
        }
        if !cache.mask.is_empty() {
            for (d, m) in s.d_last.iter_mut().zip(&cache.mask) {
                *d *= m;
            }
        }
        let features = cache.stage_out.last().unwrap();
        s.d_map.clear();
        if let Some(h) = &self.layout.hidden {
            for (d, a) in s.d_last.iter_mut().zip(&cache.hidden) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            s.d_map.resize(h.n_in, 0.0);
            let (dw, db) = split_two(grad, &h.weights, &h.bias);
            layers::fc_backward(features, &p[h.weights.clone()], &s.d_last, dw, db, &mut s.d_map);
        } else {
            s.d_map.extend_from_slice(&s.d_last);
        }

        for (i, (st, w, b)) in self.layout.stages.iter().enumerate().rev() {
            // ReLU then max-pool, in reverse.
            let act = &cache.stage_out[i];
            s.d_conv.clear();
            s.d_conv.resize(st.out_channels * st.conv_size * st.conv_size, 0.0);
            for ((d, a), idx) in s.d_map.iter().zip(act).zip(&cache.argmax[i]) {
                if *a > 0.0 {
                    s.d_conv[*idx] += d;
                }
            }
            let input = if i == 0 { x } else { &cache.stage_out[i - 1] };
            let (dw, db) = split_two(grad, w, b);
            if i == 0 {
                layers::conv_backward(input, st.in_channels, st.in_size, &p[w.clone()], st.kernel, st.out_channels, &s.d_conv, dw, db, None, &mut s.col, &mut s.d_col);
            } else {
                s.d_in.resize(st.in_channels * st.in_size * st.in_size, 0.0);
                layers::conv_backward(input, st.in_channels, st.in_size, &p[w.clone()], st.kernel, st.out_channels, &s.d_conv, dw, db, Some(&mut s.d_in), &mut s.col, &mut s.d_col);
                std::mem::swap(&mut s.d_map, &mut s.d_in);
            }
        }
    }
}

#[derive(Default)]
struct Scratch {
    d_last: Vec<f64>,
    d_map: Vec<f64>,
    d_conv: Vec<f64>,
    d_in: Vec<f64>,
    col: Vec<f64>,
    d_col: Vec<f64>,
}

/// Disjoint mutable views of the weight and bias ranges (weights come first).
fn split_two<'a>(grad: &'a mut [f64], w: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(w.end, b.start);
    let (head, tail) = grad[w.start..b.end].split_at_mut(w.len());
    (head, tail)
}

fn check_finite(values: &[f64], what: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalFailure(what()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(head: Head) -> ArchConfig {
        ArchConfig {
            input_size: 8,
            input_channels: 3,
            conv: vec![ConvSpec::new(3, 3), ConvSpec::new(2, 4)],
            fc_width: 5,
            head,
            dropout: 0.5,
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = Network::build(ArchConfig::desk(Head::Pqr(5)), 7).unwrap();
        let b = Network::build(ArchConfig::desk(Head::Pqr(5)), 7).unwrap();
        assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = Network::build(ArchConfig::desk(Head::Pqr(5)), 8).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn he_variance() {
        // Stage with k=3, in=8 and enough outputs for 1e5 samples.
        let arch = ArchConfig {
            input_size: 16,
            input_channels: 8,
            conv: vec![ConvSpec::new(3, 1389)],
            fc_width: 0,
            head: Head::Sqr,
            dropout: 0.0,
        };
        let net = Network::build(arch, 3).unwrap();
        let w = &net.params()[net.layout.stages[0].1.clone()];
        assert!(w.len() >= 100_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / 72.0;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
        let b = &net.params()[net.layout.stages[0].2.clone()];
        assert!(b.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_input_gives_uniform_pqr() {
        for net in [
            Network::zeros(ArchConfig::desk(Head::Pqr(5))).unwrap(),
            Network::build(ArchConfig::desk(Head::Pqr(5)), 1).unwrap(),
        ] {
            let x = vec![0.0; net.input_len()];
            let p = net.forward(&x, Mode::Eval).unwrap();
            for v in p[0].as_pqr().unwrap().probs() {
                assert!((v - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn eval_is_repeatable_and_normalized() {
        let net = Network::build(ArchConfig::desk(Head::Pqr(5)), 2).unwrap();
        let x: Vec<f64> = (0..net.input_len() * 3).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
        let a = net.forward(&x, Mode::Eval).unwrap();
        let b = net.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a, b);
        for p in &a {
            let s: f64 = p.as_pqr().unwrap().probs().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Network::build(ArchConfig::desk(Head::Sqr), 2).unwrap();
        assert!(matches!(net.forward(&[0.0; 10], Mode::Eval), Err(Error::InvalidInput(_))));
        let x = vec![0.0; net.input_len()];
        assert!(net.loss_and_grad(&x, Targets::Scalar(&[0.1, 0.2]), Mode::Eval).is_err());
        let q = PqrVector::new(vec![0.5, 0.5]).unwrap();
        assert!(net.loss_and_grad(&x, Targets::Pqr(&[q]), Mode::Eval).is_err());
    }

    #[test]
    fn target_equal_to_prediction_has_zero_output_grad() {
        let net = Network::build(tiny(Head::Pqr(4)), 5).unwrap();
        let x: Vec<f64> = (0..net.input_len() * 2).map(|i| (i as f64 * 0.3).sin()).collect();
        let preds = net.forward(&x, Mode::Eval).unwrap();
        let targets: Vec<PqrVector> = preds.iter().map(|p| p.as_pqr().unwrap().clone()).collect();
        let lg = net.loss_and_grad(&x, Targets::Pqr(&targets), Mode::Eval).unwrap();
        assert!(lg.output_grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn scalar_head_squared_error() {
        let mut net = Network::zeros(tiny(Head::Sqr)).unwrap();
        let bias = net.layout.output.bias.start;
        net.params_mut()[bias] = 0.7;
        let x = vec![0.1; net.input_len()];
        let lg = net.loss_and_grad(&x, Targets::Scalar(&[0.5]), Mode::Eval).unwrap();
        assert!((lg.loss - 0.04).abs() < 1e-15);
        assert!((lg.output_grad[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let mut net = Network::build(tiny(Head::Sqr), 5).unwrap();
        net.params_mut()[0] = f64::NAN;
        let x = vec![0.2; net.input_len()];
        match net.forward(&x, Mode::Eval) {
            Err(Error::NumericalFailure(what)) => assert!(what.contains("conv stage 0"), "{what}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dropout_changes_train_but_not_eval() {
        let net = Network::build(tiny(Head::Pqr(3)), 9).unwrap();
        let x: Vec<f64> = (0..net.input_len()).map(|i| (i as f64 * 0.77).cos()).collect();
        let e1 = net.forward(&x, Mode::Eval).unwrap();
        let t1 = net.forward(&x, Mode::Train { dropout_seed: 1 }).unwrap();
        let t1b = net.forward(&x, Mode::Train { dropout_seed: 1 }).unwrap();
        assert_eq!(t1, t1b);
        assert_eq!(e1, net.forward(&x, Mode::Eval).unwrap());
        let mut arch = tiny(Head::Pqr(3));
        arch.dropout = 0.0;
        let mut no_drop = Network::build(arch, 9).unwrap();
        no_drop.params_mut().copy_from_slice(net.params());
        assert_eq!(no_drop.forward(&x, Mode::Train { dropout_seed: 4 }).unwrap(), e1);
    }

    #[test]
    fn tensor_listing_covers_all_params() {
        let net = Network::build(ArchConfig::desk(Head::Pqr(5)), 1).unwrap();
        let total: usize = net.tensors().iter().map(|(_, _, d)| d.len()).sum();
        assert_eq!(total, net.n_params());
    }
}
