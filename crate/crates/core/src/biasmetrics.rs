//! Projection quality and debiasing metrics: Spearman correlation, equal-count
//! bucketing, total and between-bucket variance, F1 scores, per-node accuracy.

use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn has_ties(values: &[f64]) -> bool {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).any(|w| w[0] == w[1])
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman's rank correlation between a projection and accuracies.
///
/// Without ties this is `1 - 6 sum(d^2) / (n (n^2 - 1))`; with ties it falls
/// back to the Pearson correlation of average ranks.
pub fn spearman(projection: &[f64], accuracy: &[f64]) -> Result<f64> {
    if projection.len() != accuracy.len() {
        return Err(Error::Shape(format!(
            "spearman inputs have lengths {} and {}",
            projection.len(),
            accuracy.len()
        )));
    }
    let n = projection.len();
    if n < 2 {
        return Err(Error::invalid("spearman needs at least two observations"));
    }
    if projection.iter().chain(accuracy).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    if projection.iter().all(|&v| v == projection[0]) {
        return Err(Error::ConstantInput("projection"));
    }
    if accuracy.iter().all(|&v| v == accuracy[0]) {
        return Err(Error::ConstantInput("accuracy"));
    }
    let rx = average_ranks(projection);
    let ry = average_ranks(accuracy);
    if has_ties(projection) || has_ties(accuracy) {
        return Ok(pearson(&rx, &ry));
    }
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    let nf = n as f64;
    Ok(1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0)))
}

/// Equal-count grouping of values sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Bucketing {
    pub num_buckets: usize,
    /// Bucket id per input position.
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    /// `(min, max)` projection value per bucket.
    pub bounds: Vec<(f64, f64)>,
}

/// Sorts ascending (ties broken by input position) and cuts into
/// `n_buckets` contiguous groups; the first `len % n_buckets` buckets get
/// one extra element.
pub fn bucketize(values: &[f64], n_buckets: usize) -> Result<Bucketing> {
    let n = values.len();
    if n_buckets == 0 || n_buckets > n {
        return Err(Error::invalid(format!(
            "bucket count {n_buckets} must lie in 1..={n}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection value".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let base = n / n_buckets;
    let extra = n % n_buckets;
    let sizes: Vec<usize> = (0..n_buckets).map(|b| base + usize::from(b < extra)).collect();
    let mut assignment = vec![0; n];
    let mut bounds = Vec::with_capacity(n_buckets);
    let mut pos = 0;
    for (b, &size) in sizes.iter().enumerate() {
        let members = &order[pos..pos + size];
        for &m in members {
            assignment[m] = b;
        }
        bounds.push((values[members[0]], values[members[size - 1]]));
        pos += size;
    }
    Ok(Bucketing {
        num_buckets: n_buckets,
        assignment,
        sizes,
        bounds,
    })
}

/// Mean accuracy per bucket.
pub fn bucket_accuracy(bucketing: &Bucketing, acc: &[f64]) -> Result<Vec<f64>> {
    if acc.len() != bucketing.assignment.len() {
        return Err(Error::Shape(format!(
            "{} accuracies for {} bucketed nodes",
            acc.len(),
            bucketing.assignment.len()
        )));
    }
    let mut sums = vec![0.0; bucketing.num_buckets];
    let mut counts = vec![0usize; bucketing.num_buckets];
    for (&b, &a) in bucketing.assignment.iter().zip(acc) {
        sums[b] += a;
        counts[b] += 1;
    }
    assert!(counts.iter().all(|&c| c > 0), "empty bucket");
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance of per-node accuracy.
pub fn total_variance(acc: &[f64]) -> f64 {
    assert!(!acc.is_empty(), "variance of an empty set");
    let m = mean(acc);
    acc.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / acc.len() as f64
}

/// Spread of bucket means around the overall mean accuracy.
pub fn bucket_variance(bucketing: &Bucketing, acc: &[f64]) -> Result<f64> {
    let means = bucket_accuracy(bucketing, acc)?;
    let m = mean(acc);
    Ok(means.iter().map(|b| (b - m) * (b - m)).sum::<f64>() / means.len() as f64)
}

/// Buckets, their mean accuracies, and both correlation granularities.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketReport {
    pub bucketing: Bucketing,
    pub bucket_means: Vec<f64>,
    /// Spearman over bucket ids vs bucket means; `None` when undefined.
    pub bucket_spearman: Option<f64>,
    /// Spearman over nodes; `None` when undefined.
    pub node_spearman: Option<f64>,
    pub total_variance: f64,
    pub bucket_variance: f64,
}

pub fn bucket_report(projection: &[f64], acc: &[f64], n_buckets: usize) -> Result<BucketReport> {
    if projection.len() != acc.len() {
        return Err(Error::Shape(format!(
            "{} projection values for {} accuracies",
            projection.len(),
            acc.len()
        )));
    }
    let bucketing = bucketize(projection, n_buckets)?;
    let bucket_means = bucket_accuracy(&bucketing, acc)?;
    let ids: Vec<f64> = (0..n_buckets).map(|b| b as f64).collect();
    let defined = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ConstantInput(_)) | Err(Error::InvalidInput(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let bucket_spearman = defined(spearman(&ids, &bucket_means))?;
    let node_spearman = defined(spearman(projection, acc))?;
    let bucket_variance = bucket_variance(&bucketing, acc)?;
    Ok(BucketReport {
        bucketing,
        bucket_means,
        bucket_spearman,
        node_spearman,
        total_variance: total_variance(acc),
        bucket_variance,
    })
}

fn check_same_shape(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<()> {
    if pred.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "prediction is {:?}, truth is {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    Ok(())
}

fn f1(tp: usize, fp: usize, fneg: usize) -> f64 {
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// `(micro, macro)` F1 over binary indicator matrices with classes as columns.
/// A class that never occurs in either matrix contributes 0 to the macro mean.
pub fn f1_scores(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<(f64, f64)> {
    check_same_shape(pred, truth)?;
    let c = pred.ncols();
    let (mut tp, mut fp, mut fneg) = (vec![0usize; c], vec![0usize; c], vec![0usize; c]);
    for (p_row, t_row) in pred.rows().into_iter().zip(truth.rows()) {
        for j in 0..c {
            match (p_row[j], t_row[j]) {
                (true, true) => tp[j] += 1,
                (true, false) => fp[j] += 1,
                (false, true) => fneg[j] += 1,
                (false, false) => {}
            }
        }
    }
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fneg.iter().sum());
    let macro_ = if c == 0 {
        0.0
    } else {
        (0..c).map(|j| f1(tp[j], fp[j], fneg[j])).sum::<f64>() / c as f64
    };
    Ok((micro, macro_))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyMode {
    /// Exact-match indicator.
    SingleLabel,
    /// Fraction of classes predicted correctly.
    MultiLabel,
}

impl FromStr for AccuracyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "single-label" => Ok(AccuracyMode::SingleLabel),
            "multi" | "multi-label" => Ok(AccuracyMode::MultiLabel),
            other => Err(Error::invalid(format!("unknown accuracy mode `{other}`"))),
        }
    }
}

pub fn node_accuracy(pred: &Array2<bool>, truth: &Array2<bool>, mode: AccuracyMode) -> Result<Vec<f64>> {
    check_same_shape(pred, truth)?;
    let c = pred.ncols().max(1) as f64;
    Ok(pred
        .rows()
        .into_iter()
        .zip(truth.rows())
        .map(|(p, t)| match mode {
            AccuracyMode::SingleLabel => {
                if p == t {
                    1.0
                } else {
                    0.0
                }
            }
            AccuracyMode::MultiLabel => p.iter().zip(t.iter()).filter(|(a, b)| a == b).count() as f64 / c,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spearman_extremes() {
        let x = [0.3, 1.0, -2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v * 10.0 + 1.0).collect();
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(spearman(&x, &y).unwrap(), 1.0);
        assert_eq!(spearman(&x, &z).unwrap(), -1.0);
    }

    #[test]
    fn spearman_seven_bucket_identity() {
        // sum d^2 = 32 over 7 buckets
        let ids: Vec<f64> = (0..7).map(f64::from).collect();
        let acc = [0.2, 0.5, 0.1, 0.6, 0.3, 0.7, 0.4];
        let ranks_acc = average_ranks(&acc);
        let d2: f64 = ranks_acc.iter().zip(average_ranks(&ids)).map(|(a, b)| (a - b).powi(2)).sum();
        assert_eq!(d2, 32.0);
        let r = spearman(&ids, &acc).unwrap();
        assert!((r - 0.4286).abs() < 5e-5, "{r}");
    }

    #[test]
    fn spearman_errors() {
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
        assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ConstantInput(_))));
        assert!(matches!(spearman(&[1.0, 2.0], &[0.5, 0.5]), Err(Error::ConstantInput(_))));
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn bucket_sizes() {
        let v: Vec<f64> = (0..14).map(f64::from).collect();
        assert_eq!(bucketize(&v, 7).unwrap().sizes, vec![2; 7]);
        let v: Vec<f64> = (0..15).map(f64::from).collect();
        assert_eq!(bucketize(&v, 7).unwrap().sizes, vec![3, 2, 2, 2, 2, 2, 2]);
        assert!(bucketize(&v, 0).is_err());
        assert!(bucketize(&v, 16).is_err());
    }

    #[test]
    fn bucket_ties_follow_position() {
        let b = bucketize(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(b.assignment, vec![0, 0, 1, 1]);
    }

    #[test]
    fn variances() {
        assert_eq!(total_variance(&[0.7; 5]), 0.0);
        assert_eq!(total_variance(&[0.0, 1.0]), 0.25);
        let b = bucketize(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(bucket_variance(&b, &[0.5; 4]).unwrap(), 0.0);
        assert_eq!(bucket_accuracy(&b, &[1.0; 4]).unwrap(), vec![1.0, 1.0]);
        let one = bucketize(&[3.0, 1.0, 2.0], 1).unwrap();
        assert_eq!(bucket_accuracy(&one, &[0.0, 1.0, 0.5]).unwrap(), vec![0.5]);
    }

    #[test]
    fn f1_perfect_and_wrong() {
        let t = array![[true, false, false], [false, true, false], [false, false, true]];
        assert_eq!(f1_scores(&t, &t).unwrap(), (1.0, 1.0));
        let wrong = array![[false, true, false], [false, false, true], [true, false, false]];
        assert_eq!(f1_scores(&wrong, &t).unwrap(), (0.0, 0.0));
        let narrow = array![[true, false], [false, true]];
        assert!(f1_scores(&narrow, &t).is_err());
    }

    #[test]
    fn accuracy_modes() {
        let p = array![[true, false, true, true]];
        let t = array![[true, false, false, true]];
        assert_eq!(node_accuracy(&p, &t, AccuracyMode::MultiLabel).unwrap(), vec![0.75]);
        assert_eq!(node_accuracy(&p, &t, AccuracyMode::SingleLabel).unwrap(), vec![0.0]);
        assert_eq!(node_accuracy(&t, &t, AccuracyMode::SingleLabel).unwrap(), vec![1.0]);
        assert!("fuzzy".parse::<AccuracyMode>().is_err());
    }
}
