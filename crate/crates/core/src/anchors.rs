//! Quality anchors: the `M` representative score values shared by all images,
//! built either by uniform binning of the score range or by Lloyd-Max
//! quantization of a set of training scores.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::record;

/// Closed score interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRange {
    lo: f64,
    hi: f64,
}

impl ScoreRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("score range needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(ScoreRange { lo, hi })
    }

    /// The normalized `[0, 1]` interval all scores are mapped to before encoding.
    pub fn unit() -> Self {
        ScoreRange { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo && y <= self.hi
    }

    pub fn check(&self, y: f64) -> Result<()> {
        if self.contains(y) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                value: y,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    pub fn clamp(&self, y: f64) -> f64 {
        y.clamp(self.lo, self.hi)
    }
}

impl Default for ScoreRange {
    fn default() -> Self {
        ScoreRange::unit()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnchorMethod {
    Uniform,
    LloydMax,
}

impl AnchorMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnchorMethod::Uniform => "uniform",
            AnchorMethod::LloydMax => "lloyd_max",
        }
    }
}

impl fmt::Display for AnchorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnchorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(AnchorMethod::Uniform),
            "lloyd_max" | "lloyd-max" | "lloydmax" => Ok(AnchorMethod::LloydMax),
            other => Err(invalid(format!("unknown anchor method {other:?}"))),
        }
    }
}

/// Anchor centers `c^1 < ... < c^M` and the interleaved decision boundaries
/// `b^1 < ... < b^{M-1}` over a score range.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    centers: Vec<f64>,
    boundaries: Vec<f64>,
    method: AnchorMethod,
    range: ScoreRange,
}

impl AnchorSet {
    /// Validating constructor; enforces ordering, interleaving and, for
    /// Lloyd-Max sets, the midpoint rule.
    pub fn new(
        method: AnchorMethod,
        range: ScoreRange,
        centers: Vec<f64>,
        boundaries: Vec<f64>,
    ) -> Result<Self> {
        if centers.is_empty() {
            return Err(invalid("anchor set needs at least one center"));
        }
        if boundaries.len() + 1 != centers.len() {
            return Err(invalid(format!(
                "{} centers need {} boundaries, got {}",
                centers.len(),
                centers.len() - 1,
                boundaries.len()
            )));
        }
        if centers.iter().any(|c| !range.contains(*c)) {
            return Err(invalid("anchor center outside the score range"));
        }
        for (m, b) in boundaries.iter().enumerate() {
            if !(centers[m] < *b && *b < centers[m + 1]) {
                return Err(invalid(format!(
                    "boundary {b} does not separate centers {} and {}",
                    centers[m],
                    centers[m + 1]
                )));
            }
            if method == AnchorMethod::LloydMax {
                let mid = 0.5 * (centers[m] + centers[m + 1]);
                if (mid - b).abs() > 1e-9 {
                    return Err(invalid("lloyd_max boundary is not the midpoint of its centers"));
                }
            }
        }
        Ok(AnchorSet {
            centers,
            boundaries,
            method,
            range,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn method(&self) -> AnchorMethod {
        self.method
    }

    pub fn range(&self) -> ScoreRange {
        self.range
    }

    /// Number of anchors `M`.
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// One-line text record: `method=.. range=lo,hi centers=.. boundaries=..`.
    pub fn to_record(&self) -> String {
        format!(
            "method={} range={},{} centers={} boundaries={}",
            self.method,
            self.range.lo,
            self.range.hi,
            record::join_floats(&self.centers),
            record::join_floats(&self.boundaries)
        )
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let fields = record::parse_fields(line)?;
        let method: AnchorMethod = record::field(&fields, "method")?.parse()?;
        let range = record::split_floats(record::field(&fields, "range")?)?;
        if range.len() != 2 {
            return Err(Error::InvalidInput("range needs two values".into()));
        }
        let centers = record::split_floats(record::field(&fields, "centers")?)?;
        let boundaries = record::split_floats(record::field(&fields, "boundaries")?)?;
        AnchorSet::new(method, ScoreRange::new(range[0], range[1])?, centers, boundaries)
    }
}

/// Diagnostics from a Lloyd-Max run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerReport {
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Mean-square error after every iteration; non-increasing.
    pub mse_trace: Vec<f64>,
    /// Set when Lloyd's iterations stalled in a local minimum and were
    /// restarted from the exact optimal partition.
    pub restarted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydMaxOptions {
    pub max_iter: usize,
    /// Stop once the absolute MSE change between iterations drops below this.
    pub tol: f64,
}

impl Default for LloydMaxOptions {
    fn default() -> Self {
        LloydMaxOptions {
            max_iter: 1000,
            tol: 1e-10,
        }
    }
}

/// Midpoints of `m` equal-width bins of `range`.
pub fn uniform_anchors(range: ScoreRange, m: usize) -> Result<AnchorSet> {
    if m == 0 {
        return Err(invalid("uniform anchors need m >= 1"));
    }
    let width = range.hi - range.lo;
    let edge = |k: usize| range.lo + width * (k as f64) / (m as f64);
    let centers = (0..m)
        .map(|k| range.lo + width * (2 * k + 1) as f64 / (2 * m) as f64)
        .collect();
    let boundaries = (1..m).map(edge).collect();
    Ok(AnchorSet {
        centers,
        boundaries,
        method: AnchorMethod::Uniform,
        range,
    })
}

/// Cell index (1-based, `1..=M`) of score `y`: cells are half-open
/// `[b^{m-1}, b^m)` except the last one, which includes `range.hi`.
pub fn assign_bin(anchors: &AnchorSet, y: f64) -> Result<usize> {
    anchors.range.check(y)?;
    Ok(cell_of(&anchors.boundaries, y) + 1)
}

/// 0-based cell for `y` under half-open boundary ownership.
fn cell_of(boundaries: &[f64], y: f64) -> usize {
    boundaries.partition_point(|b| *b <= y)
}

/// Sorted distinct scores with multiplicities.
struct Support {
    values: Vec<f64>,
    weights: Vec<f64>,
    total: f64,
}

impl Support {
    fn new(scores: &[f64]) -> Self {
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut values: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for y in sorted {
            match values.last() {
                Some(&last) if last == y => *weights.last_mut().unwrap() += 1.0,
                _ => {
                    values.push(y);
                    weights.push(1.0);
                }
            }
        }
        Support {
            values,
            weights,
            total: scores.len() as f64,
        }
    }

    fn mse(&self, cells: &[usize], centers: &[f64]) -> f64 {
        let sum: f64 = self
            .values
            .iter()
            .zip(&self.weights)
            .zip(cells)
            .map(|((y, w), &k)| w * (y - centers[k]).powi(2))
            .sum();
        sum / self.total
    }
}

fn midpoints(centers: &[f64]) -> Vec<f64> {
    centers.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Lloyd-Max quantizer of `scores` into `m` levels.
///
/// Starts from the uniform anchors of `range` and alternates centroid and
/// midpoint-boundary updates. Lloyd's iteration only finds a local optimum on
/// discrete data, so the result is compared with the exact optimal contiguous
/// partition and, when that is strictly better, iteration resumes from it.
pub fn lloyd_max(
    scores: &[f64],
    m: usize,
    range: ScoreRange,
    opts: LloydMaxOptions,
) -> Result<(AnchorSet, QuantizerReport)> {
    if scores.is_empty() {
        return Err(invalid("lloyd_max needs at least one score"));
    }
    if m == 0 {
        return Err(invalid("lloyd_max needs m >= 1"));
    }
    for &y in scores {
        range.check(y)?;
    }
    let support = Support::new(scores);
    if support.values.len() < m {
        return Err(Error::DegenerateQuantizer {
            levels: m,
            distinct: support.values.len(),
        });
    }

    let mut centers = uniform_anchors(range, m)?.centers;
    let mut trace = Vec::new();
    let mut converged = iterate(&support, &mut centers, opts, &mut trace);

    let mut restarted = false;
    let optimal = optimal_centers(&support, m);
    let current = *trace.last().unwrap();
    let optimal_mse = support.mse(&assign(&support, &optimal), &optimal);
    if optimal_mse + 1e-14 < current {
        restarted = true;
        centers = optimal;
        trace.push(optimal_mse);
        converged = iterate(&support, &mut centers, opts, &mut trace);
    }

    let boundaries = midpoints(&centers);
    let mse = *trace.last().unwrap();
    let anchors = AnchorSet::new(AnchorMethod::LloydMax, range, centers, boundaries)?;
    Ok((
        anchors,
        QuantizerReport {
            mse,
            iterations: trace.len(),
            converged,
            mse_trace: trace,
            restarted,
        },
    ))
}

fn assign(support: &Support, centers: &[f64]) -> Vec<usize> {
    let boundaries = midpoints(centers);
    support
        .values
        .iter()
        .map(|&y| cell_of(&boundaries, y))
        .collect()
}

/// Runs Lloyd iterations in place, appending the MSE after each one.
/// Returns whether the tolerance was reached before `max_iter`.
fn iterate(
    support: &Support,
    centers: &mut Vec<f64>,
    opts: LloydMaxOptions,
    trace: &mut Vec<f64>,
) -> bool {
    let m = centers.len();
    for _ in 0..opts.max_iter.max(1) {
        let before = centers.clone();
        let mut cells = assign(support, centers);

        // Empty cells: move the empty center onto the worst-quantized score.
        // Bounded by m rounds since each round places a center on a score.
        for _ in 0..m {
            let mut count = vec![0.0; m];
            for (k, w) in cells.iter().zip(&support.weights) {
                count[*k] += w;
            }
            let Some(empty) = count.iter().position(|c| *c == 0.0) else {
                break;
            };
            let far = (0..support.values.len())
                .max_by(|&a, &b| {
                    let da = (support.values[a] - centers[cells[a]]).abs();
                    let db = (support.values[b] - centers[cells[b]]).abs();
                    da.total_cmp(&db)
                })
                .unwrap();
            centers[empty] = support.values[far];
            centers.sort_by(f64::total_cmp);
            cells = assign(support, centers);
        }

        let mut sum = vec![0.0; m];
        let mut count = vec![0.0; m];
        for ((y, w), k) in support.values.iter().zip(&support.weights).zip(&cells) {
            sum[*k] += w * y;
            count[*k] += w;
        }
        for k in 0..m {
            if count[k] > 0.0 {
                centers[k] = sum[k] / count[k];
            }
        }
        let mse = support.mse(&cells, centers);
        let prev = trace.last().copied();
        if let Some(p) = prev {
            // A step that does not improve (reseeding, or rounding at a fixed
            // point) is undone, which keeps the trace non-increasing.
            if mse > p {
                *centers = before;
                return true;
            }
        }
        trace.push(mse);
        if let Some(p) = prev {
            if p - mse < opts.tol {
                return true;
            }
        }
    }
    false
}

/// Centers of the minimum-MSE partition of the sorted support into `m`
/// contiguous groups (dynamic programming with monotone split points).
fn optimal_centers(support: &Support, m: usize) -> Vec<f64> {
    let n = support.values.len();
    let mut w = vec![0.0; n + 1];
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        let (y, wt) = (support.values[i], support.weights[i]);
        w[i + 1] = w[i] + wt;
        s1[i + 1] = s1[i] + wt * y;
        s2[i + 1] = s2[i] + wt * y * y;
    }
    // Squared error of the group values[i..j] around its mean.
    let cost = |i: usize, j: usize| -> f64 {
        let ww = w[j] - w[i];
        let a = s1[j] - s1[i];
        (s2[j] - s2[i] - a * a / ww).max(0.0)
    };

    // best[k][j]: min cost of splitting values[..j] into k+1 groups;
    // split[k][j]: start index of the last group.
    let mut best = vec![vec![f64::INFINITY; n + 1]; m];
    let mut split = vec![vec![0usize; n + 1]; m];
    for j in 1..=n {
        best[0][j] = cost(0, j);
    }
    for k in 1..m {
        let (done, rest) = best.split_at_mut(k);
        let prev = &done[k - 1];
        let layer = &mut rest[0];
        fill_layer(prev, layer, &mut split[k], &cost, k + 1, n, k, n);
    }

    let mut centers = vec![0.0; m];
    let mut end = n;
    for k in (0..m).rev() {
        let start = if k == 0 { 0 } else { split[k][end] };
        centers[k] = (s1[end] - s1[start]) / (w[end] - w[start]);
        end = start;
    }
    centers
}

/// Divide-and-conquer fill of one DP layer for `j in lo..=hi`, with the
/// optimal split searched in `opt_lo..=opt_hi`.
#[allow(clippy::too_many_arguments)]
fn fill_layer(
    prev: &[f64],
    layer: &mut [f64],
    split: &mut [usize],
    cost: &dyn Fn(usize, usize) -> f64,
    lo: usize,
    hi: usize,
    opt_lo: usize,
    opt_hi: usize,
) {
    if lo > hi {
        return;
    }
    let mid = (lo + hi) / 2;
    let mut best = f64::INFINITY;
    let mut arg = opt_lo;
    for s in opt_lo..=opt_hi.min(mid - 1) {
        let v = prev[s] + cost(s, mid);
        if v < best {
            best = v;
            arg = s;
        }
    }
    layer[mid] = best;
    split[mid] = arg;
    if mid > lo {
        fill_layer(prev, layer, split, cost, lo, mid - 1, opt_lo, arg);
    }
    fill_layer(prev, layer, split, cost, mid + 1, hi, arg, opt_hi);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn uniform_five_bins() {
        let a = uniform_anchors(ScoreRange::unit(), 5).unwrap();
        assert!(close(a.centers(), &[0.1, 0.3, 0.5, 0.7, 0.9], 1e-15));
        assert!(close(a.boundaries(), &[0.2, 0.4, 0.6, 0.8], 1e-15));
    }

    #[test]
    fn uniform_single_and_wide_range() {
        let a = uniform_anchors(ScoreRange::unit(), 1).unwrap();
        assert_eq!(a.centers(), &[0.5]);
        assert!(a.boundaries().is_empty());
        let b = uniform_anchors(ScoreRange::new(0.0, 100.0).unwrap(), 2).unwrap();
        assert_eq!(b.centers(), &[25.0, 75.0]);
        assert_eq!(b.boundaries(), &[50.0]);
    }

    #[test]
    fn uniform_rejects_zero_levels() {
        assert!(matches!(
            uniform_anchors(ScoreRange::unit(), 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn lloyd_two_point_masses() {
        let (a, r) = lloyd_max(&[0.0, 0.0, 1.0, 1.0], 2, ScoreRange::unit(), Default::default())
            .unwrap();
        assert!(close(a.centers(), &[0.0, 1.0], 1e-12));
        assert!(close(a.boundaries(), &[0.5], 1e-12));
        assert!(r.mse.abs() < 1e-15);
    }

    #[test]
    fn lloyd_three_scores() {
        let (a, _) =
            lloyd_max(&[0.1, 0.2, 0.8], 2, ScoreRange::unit(), Default::default()).unwrap();
        assert!(close(a.centers(), &[0.15, 0.8], 1e-12));
        assert!(close(a.boundaries(), &[0.475], 1e-12));
    }

    #[test]
    fn lloyd_single_cluster() {
        let (a, r) =
            lloyd_max(&[0.3, 0.3, 0.3], 1, ScoreRange::unit(), Default::default()).unwrap();
        assert!(close(a.centers(), &[0.3], 1e-15));
        assert!(r.mse.abs() < 1e-15);
    }

    #[test]
    fn lloyd_errors() {
        let opts = LloydMaxOptions::default();
        assert!(matches!(
            lloyd_max(&[], 2, ScoreRange::unit(), opts),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            lloyd_max(&[0.2, 0.2, 0.4], 3, ScoreRange::unit(), opts),
            Err(Error::DegenerateQuantizer {
                levels: 3,
                distinct: 2
            })
        ));
        assert!(matches!(
            lloyd_max(&[0.2, 1.5], 1, ScoreRange::unit(), opts),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn lloyd_reseeds_empty_cells() {
        // All mass inside one uniform bin: most initial cells are empty.
        let scores = [0.41, 0.42, 0.45, 0.47, 0.5, 0.52, 0.55];
        let (a, r) = lloyd_max(&scores, 5, ScoreRange::unit(), Default::default()).unwrap();
        assert_eq!(a.len(), 5);
        assert!(r.mse_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn assign_bin_half_open() {
        let a = uniform_anchors(ScoreRange::unit(), 5).unwrap();
        assert_eq!(assign_bin(&a, 0.35).unwrap(), 2);
        assert_eq!(assign_bin(&a, 1.0).unwrap(), 5);
        assert_eq!(assign_bin(&a, 0.2).unwrap(), 2);
        assert_eq!(assign_bin(&a, 0.0).unwrap(), 1);
        assert!(matches!(assign_bin(&a, -0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn record_round_trip() {
        let scores = [0.05, 0.11, 0.3, 0.31, 0.62, 0.9, 0.93];
        let (a, _) = lloyd_max(&scores, 3, ScoreRange::unit(), Default::default()).unwrap();
        let back = AnchorSet::from_record(&a.to_record()).unwrap();
        assert_eq!(a, back);
        let u = uniform_anchors(ScoreRange::unit(), 1).unwrap();
        assert_eq!(AnchorSet::from_record(&u.to_record()).unwrap(), u);
    }

    #[test]
    fn new_rejects_bad_interleaving() {
        let r = ScoreRange::unit();
        assert!(AnchorSet::new(AnchorMethod::Uniform, r, vec![0.2, 0.4], vec![0.5]).is_err());
        assert!(AnchorSet::new(AnchorMethod::LloydMax, r, vec![0.2, 0.4], vec![0.35]).is_err());
        assert!(AnchorSet::new(AnchorMethod::Uniform, r, vec![0.4, 0.2], vec![0.3]).is_err());
    }
}
