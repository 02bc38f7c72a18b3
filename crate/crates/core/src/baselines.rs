//! Reference aggregators: plain MOS and the annotator bias/inconsistency
//! maximum-likelihood model `y_is ~ N(u_i + b_s, v_s^2)`.

use std::collections::HashMap;

use crate::dataset::{init_score_matrix, Dataset, ScoreMatrix};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Lower bound on an annotator's inconsistency.
pub const V_FLOOR: f64 = 1e-4;

/// Per-item mean of raw scores.
pub fn mos<T: Scalar>(dataset: &Dataset<T>) -> Result<ScoreMatrix<T>> {
    init_score_matrix(dataset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorModel<T> {
    /// Annotator ids in first-appearance order.
    pub annotators: Vec<String>,
    pub bias: Vec<T>,
    pub inconsistency: Vec<T>,
    pub quality: Vec<T>,
}

impl<T: Scalar> AnnotatorModel<T> {
    pub fn rows(&self) -> Vec<(String, T, T)> {
        self.annotators
            .iter()
            .zip(&self.bias)
            .zip(&self.inconsistency)
            .map(|((a, &b), &v)| (a.clone(), b, v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOutcome<T> {
    pub scores: ScoreMatrix<T>,
    pub model: AnnotatorModel<T>,
    pub iterations: usize,
    /// False when `max_iters` ran out before the change fell below `tol`.
    pub converged: bool,
    /// Log-likelihood after each iteration.
    pub log_likelihood: Vec<T>,
}

struct Obs<T> {
    item: usize,
    annotator: usize,
    score: T,
}

fn log_likelihood<T: Scalar>(obs: &[Obs<T>], u: &[T], b: &[T], v: &[T]) -> T {
    let half = T::lit(0.5);
    let ln_2pi = T::lit((2.0 * std::f64::consts::PI).ln());
    obs.iter()
        .map(|o| {
            let r = o.score - u[o.item] - b[o.annotator];
            let var = v[o.annotator] * v[o.annotator];
            -(half * ln_2pi) - v[o.annotator].ln() - half * r * r / var
        })
        .sum()
}

/// Alternating maximum-likelihood estimate of item quality, annotator bias
/// and annotator inconsistency.
///
/// Starts from `u = MOS`, `b = 0`, `v = 1`, then repeats: `u_i` as the
/// `1/v_s^2`-weighted mean of `y_is - b_s`; `b_s` as the mean of
/// `y_is - u_i`; recentre so that `sum(b) = 0` (shifting `u` by the same
/// amount, which leaves the fit unchanged); `v_s^2` as the mean squared
/// residual, floored at [`V_FLOOR`]^2. Stops when the largest parameter
/// change drops below `tol`.
pub fn mle_aggregate<T: Scalar>(
    dataset: &Dataset<T>,
    max_iters: usize,
    tol: f64,
) -> Result<MleOutcome<T>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut annotators = Vec::new();
    let mut obs = Vec::new();
    for (i, item) in dataset.items().iter().enumerate() {
        if item.raw_scores.is_empty() {
            return Err(Error::MalformedDataset(format!("item `{}` has no scores", item.id)));
        }
        for o in &item.raw_scores {
            let s = *index.entry(o.annotator.as_str()).or_insert_with(|| {
                annotators.push(o.annotator.clone());
                annotators.len() - 1
            });
            obs.push(Obs {
                item: i,
                annotator: s,
                score: o.score,
            });
        }
    }
    let (n_items, n_ann) = (dataset.len(), annotators.len());
    let floor = T::lit(V_FLOOR);
    let tol = T::lit(tol);

    let mut u = mos(dataset)?.values;
    let mut b = vec![T::zero(); n_ann];
    let mut v = vec![T::one(); n_ann];
    let mut per_ann = vec![0usize; n_ann];
    for o in &obs {
        per_ann[o.annotator] += 1;
    }
    let count = |k: usize| T::from_usize(k).expect("count fits scalar");

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;

        let mut num = vec![T::zero(); n_items];
        let mut den = vec![T::zero(); n_items];
        for o in &obs {
            let w = T::one() / (v[o.annotator] * v[o.annotator]);
            num[o.item] = num[o.item] + w * (o.score - b[o.annotator]);
            den[o.item] = den[o.item] + w;
        }
        let new_u: Vec<T> = num.iter().zip(&den).map(|(&a, &d)| a / d).collect();

        let mut sums = vec![T::zero(); n_ann];
        for o in &obs {
            sums[o.annotator] = sums[o.annotator] + (o.score - new_u[o.item]);
        }
        let mut new_b: Vec<T> = sums
            .iter()
            .zip(&per_ann)
            .map(|(&s, &k)| s / count(k))
            .collect();
        let shift = new_b.iter().copied().sum::<T>() / count(n_ann);
        let new_u: Vec<T> = if shift == T::zero() {
            new_u
        } else {
            new_b.iter_mut().for_each(|x| *x = *x - shift);
            new_u.into_iter().map(|x| x + shift).collect()
        };

        let mut sq = vec![T::zero(); n_ann];
        for o in &obs {
            let r = o.score - new_u[o.item] - new_b[o.annotator];
            sq[o.annotator] = sq[o.annotator] + r * r;
        }
        let new_v: Vec<T> = sq
            .iter()
            .zip(&per_ann)
            .map(|(&s, &k)| (s / count(k)).sqrt().max(floor))
            .collect();

        let delta = |a: &[T], b: &[T]| {
            a.iter()
                .zip(b)
                .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
        };
        let change = delta(&new_u, &u).max(delta(&new_b, &b)).max(delta(&new_v, &v));
        u = new_u;
        b = new_b;
        v = new_v;
        history.push(log_likelihood(&obs, &u, &b, &v));
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("annotator MLE did not converge within {max_iters} iterations");
    }

    Ok(MleOutcome {
        scores: ScoreMatrix { values: u.clone() },
        model: AnnotatorModel {
            annotators,
            bias: b,
            inconsistency: v,
            quality: u,
        },
        iterations,
        converged,
        log_likelihood: history,
    })
}
