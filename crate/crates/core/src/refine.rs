//! The refinement loop.
//!
//! Each epoch trains the residual scorer for one pass against the raw labels,
//! then (once the warm-up is over) moves every score estimate towards
//! `S(x, x') + u(x')` with an exponential moving average. All targets of an
//! epoch are computed from the epoch-start estimates and written at once.

use rayon::prelude::*;

use crate::dataset::{init_score_matrix, Dataset, ScoreMatrix};
use crate::nnindex::NeighborDictionary;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::scorer::{init_params, sgd_epoch, ScorerParams, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    /// Weight of the current estimate in the EMA; 1 keeps scores unchanged.
    pub ema_alpha: f64,
    /// Epochs before the first score update.
    pub warmup: usize,
    pub epochs: usize,
    pub train: TrainConfig,
    /// Use the evolving estimates `u(x')` as references (otherwise the raw
    /// neighbour labels).
    pub use_score_matrix: bool,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            ema_alpha: 0.9,
            warmup: 2,
            epochs: 10,
            train: TrainConfig::default(),
            use_score_matrix: true,
            seed: 0,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ema_alpha) {
            return Err(Error::InvalidConfig(format!(
                "ema weight must lie in [0,1], got {}",
                self.ema_alpha
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.warmup > self.epochs {
            return Err(Error::InvalidConfig(format!(
                "warmup {} exceeds epochs {}",
                self.warmup, self.epochs
            )));
        }
        TrainConfig {
            epochs: self.epochs,
            ..self.train.clone()
        }
        .validate()
    }
}

/// `alpha * current + (1 - alpha) * target`.
pub fn ema_update<T: Scalar>(target: T, current: T, alpha: f64) -> Result<T> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "ema weight must lie in [0,1], got {alpha}"
        )));
    }
    Ok(if alpha == 1.0 {
        current
    } else if alpha == 0.0 {
        target
    } else {
        let a = T::lit(alpha);
        a * current + (T::one() - a) * target
    })
}

/// Anything that can act as the residual `S(e, e_ref)`.
pub trait Residual<T> {
    fn residual(&self, e: &[T], e_ref: &[T]) -> Result<T>;
}

impl<T: Scalar> Residual<T> for ScorerParams<T> {
    fn residual(&self, e: &[T], e_ref: &[T]) -> Result<T> {
        self.forward(e, e_ref)
    }
}

impl<T, F> Residual<T> for F
where
    F: Fn(&[T], &[T]) -> T,
{
    fn residual(&self, e: &[T], e_ref: &[T]) -> Result<T> {
        Ok(self(e, e_ref))
    }
}

/// Everything that went into one item's update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub reference: usize,
    pub similarity: T,
    pub residual: T,
    pub reference_score: T,
    pub target: T,
    pub previous: T,
    pub updated: T,
    pub applied: bool,
}

/// Computes targets `S(e_n, e_ref) + references[ref]` for all items and,
/// when `apply` is set, blends them into `current`.
pub fn ema_step<T, R>(
    dataset: &Dataset<T>,
    dict: &NeighborDictionary<T>,
    current: &[T],
    references: &[T],
    scorer: &R,
    alpha: f64,
    apply: bool,
) -> Result<Vec<StepRecord<T>>>
where
    T: Scalar,
    R: Residual<T> + Sync,
{
    let n = dataset.len();
    if current.len() != n || references.len() != n || dict.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: current.len().min(references.len()).min(dict.len()),
        });
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (m, similarity) = dict.query(i)?;
            let residual = scorer.residual(dataset.embedding(i), dataset.embedding(m))?;
            let reference_score = references[m];
            let target = residual + reference_score;
            let previous = current[i];
            let updated = if apply {
                ema_update(target, previous, alpha)?
            } else {
                previous
            };
            Ok(StepRecord {
                reference: m,
                similarity,
                residual,
                reference_score,
                target,
                previous,
                updated,
                applied: apply,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats<T> {
    pub mean_abs_update: T,
    pub train_loss: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult<T> {
    pub cleaned: ScoreMatrix<T>,
    pub initial: ScoreMatrix<T>,
    pub params: ScorerParams<T>,
    pub trajectory: Vec<EpochStats<T>>,
    /// Per-item record of the last epoch.
    pub final_step: Vec<StepRecord<T>>,
}

impl<T: Scalar> RefineResult<T> {
    pub fn trajectory_rows(&self) -> Vec<(T, T)> {
        self.trajectory
            .iter()
            .map(|s| (s.mean_abs_update, s.train_loss))
            .collect()
    }
}

/// Runs the full loop described at module level.
///
/// The training loss reported per epoch is the full-data objective
/// `mean (y_n - S(e_n, e_ref) - u_ref)^2` at the end of the epoch.
pub fn refine<T: Scalar>(
    dataset: &Dataset<T>,
    dict: &NeighborDictionary<T>,
    config: &RefineConfig,
) -> Result<RefineResult<T>> {
    config.validate()?;
    if dict.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            left: dataset.len(),
            right: dict.len(),
        });
    }
    let initial = init_score_matrix(dataset)?;
    let labels = initial.values.clone();
    let mut u = initial.values.clone();
    let mut rng = Rng::new(config.seed);
    let mut params = init_params(dataset.dim(), config.train.hidden, &mut rng)?;
    let mut trajectory = Vec::with_capacity(config.epochs);
    let mut final_step = Vec::new();
    let n = T::from_usize(dataset.len()).expect("count fits scalar");

    for epoch in 0..config.epochs {
        let references = if config.use_score_matrix { &u } else { &labels };
        params = sgd_epoch(
            &params,
            dataset,
            dict,
            &labels,
            references,
            &config.train,
            &mut rng,
        )?
        .0;
        let apply = epoch >= config.warmup;
        let step = ema_step(
            dataset,
            dict,
            &u,
            references,
            &params,
            config.ema_alpha,
            apply,
        )?;
        if !params.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "scorer diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        let next: Vec<T> = step.iter().map(|r| r.updated).collect();
        let mean_abs_update = next
            .iter()
            .zip(&u)
            .map(|(a, b)| (*a - *b).abs())
            .sum::<T>()
            / n;
        let train_loss = labels
            .iter()
            .zip(&step)
            .map(|(&y, r)| (y - r.target) * (y - r.target))
            .sum::<T>()
            / n;
        trajectory.push(EpochStats {
            mean_abs_update,
            train_loss,
        });
        u = next;
        if !apply {
            debug_assert_eq!(u, initial.values);
        }
        if epoch + 1 == config.epochs {
            final_step = step;
        }
    }

    Ok(RefineResult {
        cleaned: ScoreMatrix { values: u },
        initial,
        params,
        trajectory,
        final_step,
    })
}

/// The ablation that always references the raw neighbour label.
pub fn refine_without_score_matrix<T: Scalar>(
    dataset: &Dataset<T>,
    dict: &NeighborDictionary<T>,
    config: &RefineConfig,
) -> Result<RefineResult<T>> {
    refine(
        dataset,
        dict,
        &RefineConfig {
            use_score_matrix: false,
            ..config.clone()
        },
    )
}
