//! Probabilistic quality representation: soft-assignment of a scalar score to
//! the anchors, the linear reverse mapping back to a score, and the
//! probabilistic losses.

use std::fmt;
use std::str::FromStr;

use crate::anchors::{AnchorSet, ScoreRange};
use crate::error::{invalid, Error, Result};
use crate::record;

/// Tolerance on `sum(probs) == 1` for a valid [`PqrVector`].
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distance {
    #[default]
    SquaredEuclidean,
    L1,
}

impl Distance {
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match self {
            Distance::SquaredEuclidean => (a - b) * (a - b),
            Distance::L1 => (a - b).abs(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Distance::SquaredEuclidean => "squared_euclidean",
            Distance::L1 => "l1",
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_euclidean" | "squared" | "l2sq" => Ok(Distance::SquaredEuclidean),
            "l1" => Ok(Distance::L1),
            other => Err(invalid(format!("unknown distance {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    beta: f64,
    anchors: AnchorSet,
    distance: Distance,
}

impl EncoderConfig {
    pub fn new(beta: f64, anchors: AnchorSet, distance: Distance) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {beta}")));
        }
        Ok(EncoderConfig {
            beta,
            anchors,
            distance,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn distance(&self) -> Distance {
        self.distance
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// A probability vector over the `M` anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct PqrVector(Vec<f64>);

impl PqrVector {
    /// Validates that every entry lies in `[0, 1]` and the entries sum to one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("empty probability vector"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("probability outside [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid(format!("probabilities sum to {sum}")));
        }
        Ok(PqrVector(probs))
    }

    /// Wraps softmax output, which satisfies the invariants by construction.
    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        PqrVector(probs)
    }

    /// Point mass on anchor `index`.
    pub fn one_hot(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(invalid(format!("one-hot index {index} out of {len}")));
        }
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Ok(PqrVector(v))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for PqrVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Numerically stable softmax of `logits` (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Soft assignment `q^m = exp(-beta d(y, c^m)) / sum_i exp(-beta d(y, c^i))`.
pub fn encode(y: f64, cfg: &EncoderConfig) -> Result<PqrVector> {
    cfg.anchors.range().check(y)?;
    let logits: Vec<f64> = cfg
        .anchors
        .centers()
        .iter()
        .map(|c| -cfg.beta * cfg.distance.eval(y, *c))
        .collect();
    Ok(PqrVector(softmax(&logits)))
}

pub fn encode_batch(ys: &[f64], cfg: &EncoderConfig) -> Result<Vec<PqrVector>> {
    ys.iter()
        .enumerate()
        .map(|(i, y)| encode(*y, cfg).map_err(|e| Error::at(i, e)))
        .collect()
}

/// Linear reverse mapping `h(q) = w . q + b`, clamped to the score range.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseMapper {
    weights: Vec<f64>,
    bias: f64,
    fit_mae: f64,
    range: ScoreRange,
}

impl ReverseMapper {
    pub fn new(weights: Vec<f64>, bias: f64, fit_mae: f64, range: ScoreRange) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("reverse mapper needs at least one weight"));
        }
        if !(fit_mae >= 0.0) {
            return Err(invalid("fit_mae must be nonnegative"));
        }
        Ok(ReverseMapper {
            weights,
            bias,
            fit_mae,
            range,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Mean absolute error on the training pairs the mapper was fit on.
    pub fn fit_mae(&self) -> f64 {
        self.fit_mae
    }

    pub fn range(&self) -> ScoreRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn raw(&self, q: &[f64]) -> f64 {
        self.weights.iter().zip(q).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn to_record(&self) -> String {
        format!(
            "weights={} bias={} fit_mae={} range={},{}",
            record::join_floats(&self.weights),
            self.bias,
            self.fit_mae,
            self.range.lo(),
            self.range.hi()
        )
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let fields = record::parse_fields(line)?;
        let weights = record::split_floats(record::field(&fields, "weights")?)?;
        let bias = record::parse_num(record::field(&fields, "bias")?, "bias")?;
        let fit_mae = record::parse_num(record::field(&fields, "fit_mae")?, "fit_mae")?;
        let range = record::split_floats(record::field(&fields, "range")?)?;
        if range.len() != 2 {
            return Err(Error::InvalidInput("range needs two values".into()));
        }
        ReverseMapper::new(weights, bias, fit_mae, ScoreRange::new(range[0], range[1])?)
    }
}

/// Fits `h` by least squares on `(pqrs[n], ys[n])`, with an optional ridge
/// penalty on the weights (the bias is not penalized).
///
/// PQR vectors sum to one, so their coordinates are collinear with the bias
/// column and the unpenalized normal equations are always singular: a
/// positive `ridge` is required in practice.
pub fn fit_reverse_map(
    pqrs: &[PqrVector],
    ys: &[f64],
    range: ScoreRange,
    ridge: f64,
) -> Result<ReverseMapper> {
    if pqrs.is_empty() || pqrs.len() != ys.len() {
        return Err(invalid(format!(
            "need equal nonzero lengths, got {} vectors and {} scores",
            pqrs.len(),
            ys.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(invalid("ridge must be nonnegative"));
    }
    let m = pqrs[0].len();
    if let Some(i) = pqrs.iter().position(|q| q.len() != m) {
        return Err(Error::at(i, invalid("PQR dimension differs from the first vector")));
    }

    // Normal equations of the mean squared error over features [q, 1].
    let d = m + 1;
    let n = pqrs.len() as f64;
    let mut a = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut x = vec![0.0; d];
    for (q, &y) in pqrs.iter().zip(ys) {
        x[..m].copy_from_slice(q.probs());
        x[m] = 1.0;
        for i in 0..d {
            rhs[i] += x[i] * y / n;
            for j in 0..d {
                a[i * d + j] += x[i] * x[j] / n;
            }
        }
    }
    for i in 0..m {
        a[i * d + i] += ridge;
    }
    let theta = cholesky_solve(&mut a, &mut rhs, d)?;

    let weights = theta[..m].to_vec();
    let bias = theta[m];
    let mut mapper = ReverseMapper {
        weights,
        bias,
        fit_mae: 0.0,
        range,
    };
    let mae = pqrs
        .iter()
        .zip(ys)
        .map(|(q, y)| (mapper.raw(q.probs()) - y).abs())
        .sum::<f64>()
        / n;
    mapper.fit_mae = mae;
    Ok(mapper)
}

/// Solves the symmetric positive definite system in place. Pivots that fall
/// below a relative threshold are reported as a singular fit.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], d: usize) -> Result<Vec<f64>> {
    let scale = (0..d).map(|i| a[i * d + i]).fold(0.0, f64::max);
    let threshold = 1e-13 * scale.max(f64::MIN_POSITIVE);
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        if !(diag > threshold) {
            return Err(Error::SingularFit);
        }
        let l = diag.sqrt();
        a[j * d + j] = l;
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / l;
        }
    }
    // L z = b, then L^T x = z.
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * d + k] * b[k];
        }
        b[i] = v / a[i * d + i];
    }
    for i in (0..d).rev() {
        let mut v = b[i];
        for k in i + 1..d {
            v -= a[k * d + i] * b[k];
        }
        b[i] = v / a[i * d + i];
    }
    Ok(b.to_vec())
}

pub fn apply_reverse_map(mapper: &ReverseMapper, q: &PqrVector) -> Result<f64> {
    if q.len() != mapper.len() {
        return Err(invalid(format!(
            "PQR has {} entries, mapper expects {}",
            q.len(),
            mapper.len()
        )));
    }
    Ok(mapper.range.clamp(mapper.raw(q.probs())))
}

fn check_pair(target: &PqrVector, pred: &PqrVector) -> Result<()> {
    if target.len() != pred.len() {
        return Err(invalid(format!(
            "target has {} entries, prediction {}",
            target.len(),
            pred.len()
        )));
    }
    if let Some(index) = target
        .probs()
        .iter()
        .zip(pred.probs())
        .position(|(t, p)| *t > 0.0 && *p <= 0.0)
    {
        return Err(Error::DivergentLoss { index });
    }
    Ok(())
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(p: &PqrVector) -> f64 {
    -p.probs()
        .iter()
        .filter(|x| **x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

/// `D_KL(target || pred)` in nats.
pub fn kl_divergence(target: &PqrVector, pred: &PqrVector) -> Result<f64> {
    check_pair(target, pred)?;
    let kl: f64 = target
        .probs()
        .iter()
        .zip(pred.probs())
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| t * (t / p).ln())
        .sum();
    Ok(kl.max(0.0))
}

/// `-sum_m target^m log pred^m` in nats.
pub fn cross_entropy(target: &PqrVector, pred: &PqrVector) -> Result<f64> {
    check_pair(target, pred)?;
    Ok(-target
        .probs()
        .iter()
        .zip(pred.probs())
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| t * p.ln())
        .sum::<f64>())
}
