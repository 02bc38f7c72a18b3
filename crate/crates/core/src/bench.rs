//! Synthetic recovery benchmark: generate a corpus, degrade its labels,
//! refine, and score both the degraded and refined labels against truth.

use crate::dataset::{Dataset, Item, ScoreMap};
use crate::metrics::{knn_proxy_eval, MetricReport};
use crate::nnindex::build_index;
use crate::refine::{refine, RefineConfig, RefineResult};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::simulate::{generate_synthetic, simulate, SimulationConfig, SyntheticSpec};
use crate::{Error, Result};

const CORPUS_TAG: u64 = 1;
const NOISE_TAG: u64 = 2;
const REFINE_TAG: u64 = 3;
const SPLIT_TAG: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub n_items: usize,
    pub dim: usize,
    pub rho: f64,
    pub simulation: SimulationConfig,
    pub refine: RefineConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n_items: 500,
            dim: 16,
            rho: 0.9,
            simulation: SimulationConfig::default(),
            refine: RefineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome<T> {
    /// Degraded labels vs truth (the MOS row).
    pub noisy: MetricReport<T>,
    /// Refined labels vs truth.
    pub refined: MetricReport<T>,
    pub truth: Vec<T>,
    pub result: RefineResult<T>,
}

/// Clean and degraded corpora for one experiment seed. The seeds stored in
/// `config` are ignored; every stage is seeded from `seed`.
pub fn corpus<T: Scalar>(config: &BenchmarkConfig, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let clean = generate_synthetic(&SyntheticSpec {
        n_items: config.n_items,
        dim: config.dim,
        quality_signal_corr: config.rho,
        seed: Rng::derive(seed, CORPUS_TAG),
    })?;
    let noisy = simulate(
        &clean,
        &SimulationConfig {
            seed: Rng::derive(seed, NOISE_TAG),
            ..config.simulation.clone()
        },
    )?;
    Ok((clean, noisy))
}

fn refine_seeded<T: Scalar>(
    dataset: &Dataset<T>,
    config: &BenchmarkConfig,
    seed: u64,
) -> Result<RefineResult<T>> {
    let dict = build_index(dataset)?;
    refine(
        dataset,
        &dict,
        &RefineConfig {
            seed: Rng::derive(seed, REFINE_TAG),
            ..config.refine.clone()
        },
    )
}

pub fn run<T: Scalar>(config: &BenchmarkConfig, seed: u64) -> Result<BenchmarkOutcome<T>> {
    let (_, noisy) = corpus::<T>(config, seed)?;
    let truth = noisy
        .true_scores()
        .ok_or_else(|| Error::MalformedDataset("benchmark corpus lacks truth".into()))?;
    let result = refine_seeded(&noisy, config, seed)?;
    Ok(BenchmarkOutcome {
        noisy: MetricReport::compute(&result.initial.values, &truth)?,
        refined: MetricReport::compute(&result.cleaned.values, &truth)?,
        truth,
        result,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownstreamOutcome<T> {
    pub trained_on_noisy: MetricReport<T>,
    pub trained_on_refined: MetricReport<T>,
}

/// k-NN proxy on a seeded split: refinement sees only the training items,
/// and both proxies are scored on the held-out items' truth.
pub fn downstream<T: Scalar>(
    config: &BenchmarkConfig,
    seed: u64,
    train_fraction: f64,
    k: usize,
) -> Result<DownstreamOutcome<T>> {
    let (_, noisy) = corpus::<T>(config, seed)?;
    let n = noisy.len();
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(2, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(Rng::derive(seed, SPLIT_TAG)).shuffle(&mut order);
    let (train_idx, test_idx) = order.split_at(n_train);

    let pick = |idx: &[usize]| -> Vec<Item<T>> { idx.iter().map(|&i| noisy.item(i).clone()).collect() };
    let train = Dataset::new(pick(train_idx), ScoreMap::identity())?;
    let result = refine_seeded(&train, config, seed)?;

    let train_emb: Vec<&[T]> = (0..train.len()).map(|i| train.embedding(i)).collect();
    let test_emb: Vec<&[T]> = test_idx.iter().map(|&i| noisy.embedding(i)).collect();
    let test_truth: Vec<T> = test_idx
        .iter()
        .map(|&i| noisy.item(i).true_mos.expect("synthetic truth"))
        .collect();
    Ok(DownstreamOutcome {
        trained_on_noisy: knn_proxy_eval(&train_emb, &result.initial.values, &test_emb, &test_truth, k)?,
        trained_on_refined: knn_proxy_eval(&train_emb, &result.cleaned.values, &test_emb, &test_truth, k)?,
    })
}
