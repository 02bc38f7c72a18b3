//! Perceptual-similarity preprocessing (PSP) of subjective quality scores.
//!
//! Each noisy opinion score is treated as a judgement made relative to the
//! most perceptually similar item in the corpus. A small pairwise residual
//! scorer `S(x, x')` is trained on the noisy labels, and after a warm-up the
//! per-item score estimates are pulled towards `S(x, x') + u(x')` with an
//! exponential moving average.
//!
//! The numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the CLI
//! uses.
//!
//! ```
//! use psp_core::{simulate, nnindex, refine};
//!
//! let clean = simulate::generate_synthetic::<f64>(&simulate::SyntheticSpec {
//!     n_items: 40, dim: 8, quality_signal_corr: 0.9, seed: 3,
//! }).unwrap();
//! let noisy = simulate::inject_gaussian(&clean, &simulate::SimulationConfig::default()).unwrap();
//! let dict = nnindex::build_index(&noisy).unwrap();
//! let result = refine::refine(&noisy, &dict, &refine::RefineConfig::default()).unwrap();
//! assert_eq!(result.cleaned.len(), 40);
//! ```

pub mod baselines;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod nnindex;
pub mod refine;
pub mod rng;
pub mod scalar;
pub mod scorer;
pub mod simulate;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;

pub type Item = dataset::Item<f64>;
pub type Dataset = dataset::Dataset<f64>;
pub type ScoreMatrix = dataset::ScoreMatrix<f64>;
pub type EmbeddingTable = features::EmbeddingTable<f64>;
pub type GrayImage = features::GrayImage<f64>;
pub type NeighborDictionary = nnindex::NeighborDictionary<f64>;
pub type ScorerParams = scorer::ScorerParams<f64>;
pub type RefineResult = refine::RefineResult<f64>;
pub type AnnotatorModel = baselines::AnnotatorModel<f64>;
pub type MetricReport = metrics::MetricReport<f64>;
