use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPair {
    pub srcc: f64,
    pub plcc: f64,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "correlation inputs differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter("correlation needs at least two points".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("correlation inputs must be finite".into()));
    }
    Ok(())
}

fn pearson(a: &[f64], b: &[f64], what: &'static str) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation(what));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b), "srcc of constant input")
}

/// Pearson linear correlation of the raw values.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(a, b, "plcc of constant input")
}

pub fn metric_pair(pred: &[f64], truth: &[f64]) -> Result<MetricPair> {
    Ok(MetricPair {
        srcc: srcc(pred, truth)?,
        plcc: plcc(pred, truth)?,
    })
}

pub fn pool_average(patch_scores: &[f64]) -> Result<f64> {
    if patch_scores.is_empty() {
        return Err(Error::InvalidParameter("cannot pool zero patches".into()));
    }
    Ok(patch_scores.iter().sum::<f64>() / patch_scores.len() as f64)
}

/// Median (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Sample standard deviation; 0 for a single value.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(srcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(srcc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(srcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(), 0.8);
    }

    #[test]
    fn pearson_examples() {
        let a = [0.3, 1.1, 2.0, 5.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 3.0).collect();
        assert!((plcc(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let c: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((plcc(&a, &c).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(plcc(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn constant_input_is_undefined() {
        assert!(matches!(srcc(&[1.0, 1.0], &[0.0, 1.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(plcc(&[0.0, 1.0], &[2.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(srcc(&[1.0], &[1.0]).is_err());
        assert!(plcc(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tied_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn pooling() {
        assert_eq!(pool_average(&[0.4]).unwrap(), 0.4);
        assert_eq!(pool_average(&[0.2, 0.8]).unwrap(), 0.5);
        assert!(pool_average(&[]).is_err());
    }

    #[test]
    fn median_and_std() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(std_dev(&[5.0]), 0.0);
        assert!((std_dev(&[1.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn invariances(v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            if let (Ok(s), Ok(p)) = (srcc(&a, &b), plcc(&a, &b)) {
                let mono: Vec<f64> = a.iter().map(|x| x.exp() + 3.0 * x).collect();
                let affine: Vec<f64> = a.iter().map(|x| 0.5 * x - 7.0).collect();
                prop_assert!((srcc(&mono, &b).unwrap() - s).abs() < 1e-9);
                prop_assert!((plcc(&affine, &b).unwrap() - p).abs() < 1e-9);
                prop_assert!(s.abs() <= 1.0 && p.abs() <= 1.0);
            }
        }

        #[test]
        fn pooling_is_permutation_invariant(mut v in prop::collection::vec(0.0f64..1.0, 1..20)) {
            let a = pool_average(&v).unwrap();
            v.reverse();
            prop_assert!((pool_average(&v).unwrap() - a).abs() < 1e-15);
        }
    }
}
