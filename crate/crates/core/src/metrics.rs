//! Agreement metrics between predicted and true scores, and the k-NN
//! downstream proxy.

use crate::scalar::{dot, Scalar};
use crate::{Error, Result};

/// A correlation coefficient. `degenerate` is set (and `value` is 0) when one
/// side has no variance, so sweeps can carry on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation<T> {
    pub value: T,
    pub degenerate: bool,
}

impl<T: Scalar> Correlation<T> {
    fn of(value: T) -> Self {
        Self {
            value,
            degenerate: false,
        }
    }

    fn degenerate() -> Self {
        Self {
            value: T::zero(),
            degenerate: true,
        }
    }
}

fn check_pair<T>(a: &[T], b: &[T], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < min {
        return Err(Error::InsufficientData(format!(
            "need at least {min} paired values, got {}",
            a.len()
        )));
    }
    Ok(())
}

fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count fits scalar")
}

fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Correlation<T> {
    let n = count::<T>(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Correlation::degenerate();
    }
    let r = sxy / (sxx * syy).sqrt();
    Correlation::of(r.max(-T::one()).min(T::one()))
}

/// Sample Pearson correlation.
pub fn plcc<T: Scalar>(a: &[T], b: &[T]) -> Result<Correlation<T>> {
    check_pair(a, b, 2)?;
    Ok(pearson(a, b))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn fractional_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("finite values"));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let r = count::<T>(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman correlation: Pearson on fractional ranks.
pub fn srocc<T: Scalar>(a: &[T], b: &[T]) -> Result<Correlation<T>> {
    check_pair(a, b, 2)?;
    Ok(pearson(&fractional_ranks(a), &fractional_ranks(b)))
}

/// Kendall tau-b by pair enumeration.
pub fn krocc<T: Scalar>(a: &[T], b: &[T]) -> Result<Correlation<T>> {
    check_pair(a, b, 2)?;
    let (mut concordant, mut discordant, mut tie_a, mut tie_b) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = a[i].partial_cmp(&a[j]).expect("finite values");
            let db = b[i].partial_cmp(&b[j]).expect("finite values");
            use std::cmp::Ordering::Equal;
            match (da, db) {
                (Equal, Equal) => {}
                (Equal, _) => tie_a += 1,
                (_, Equal) => tie_b += 1,
                _ if da == db => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let paired = concordant + discordant;
    let (na, nb) = (paired + tie_b, paired + tie_a);
    if na == 0 || nb == 0 {
        return Ok(Correlation::degenerate());
    }
    let num = T::lit(concordant as f64) - T::lit(discordant as f64);
    let den = (T::lit(na as f64) * T::lit(nb as f64)).sqrt();
    Ok(Correlation::of((num / den).max(-T::one()).min(T::one())))
}

/// Mean squared difference.
pub fn mse<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_pair(a, b, 1)?;
    let total: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(total / count(a.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport<T> {
    pub srocc: T,
    pub plcc: T,
    pub krocc: T,
    pub mse: T,
    /// Any of the correlations hit a zero-variance input.
    pub degenerate: bool,
}

impl<T: Scalar> MetricReport<T> {
    pub fn compute(predicted: &[T], truth: &[T]) -> Result<Self> {
        let s = srocc(predicted, truth)?;
        let p = plcc(predicted, truth)?;
        let k = krocc(predicted, truth)?;
        Ok(Self {
            srocc: s.value,
            plcc: p.value,
            krocc: k.value,
            mse: mse(predicted, truth)?,
            degenerate: s.degenerate || p.degenerate || k.degenerate,
        })
    }
}

/// Predicts each test score as the similarity-weighted mean of its `k` most
/// similar training items (weights `max(dot, 0) + 1e-6`, ties to the lower
/// index) and scores the predictions against `test_truth`.
pub fn knn_predict<T: Scalar, E: AsRef<[T]> + Sync>(
    train_embeddings: &[E],
    train_scores: &[T],
    test_embeddings: &[E],
    k: usize,
) -> Result<Vec<T>> {
    if train_embeddings.len() != train_scores.len() {
        return Err(Error::LengthMismatch {
            left: train_embeddings.len(),
            right: train_scores.len(),
        });
    }
    if k == 0 || k > train_scores.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} must lie in 1..={}",
            train_scores.len()
        )));
    }
    let eps = T::lit(1e-6);
    Ok(test_embeddings
        .iter()
        .map(|q| {
            let mut sims: Vec<(usize, T)> = train_embeddings
                .iter()
                .enumerate()
                .map(|(i, e)| (i, dot(q.as_ref(), e.as_ref())))
                .collect();
            sims.sort_by(|x, y| {
                y.1.partial_cmp(&x.1)
                    .expect("finite similarities")
                    .then(x.0.cmp(&y.0))
            });
            let top = &sims[..k];
            // offset by the first neighbour's score so constant inputs stay exact
            let base = train_scores[top[0].0];
            let (mut num, mut den) = (T::zero(), T::zero());
            for &(i, s) in top {
                let w = s.max(T::zero()) + eps;
                num = num + w * (train_scores[i] - base);
                den = den + w;
            }
            base + num / den
        })
        .collect())
}

pub fn knn_proxy_eval<T: Scalar, E: AsRef<[T]> + Sync>(
    train_embeddings: &[E],
    train_scores: &[T],
    test_embeddings: &[E],
    test_truth: &[T],
    k: usize,
) -> Result<MetricReport<T>> {
    let pred = knn_predict(train_embeddings, train_scores, test_embeddings, k)?;
    MetricReport::compute(&pred, test_truth)
}
