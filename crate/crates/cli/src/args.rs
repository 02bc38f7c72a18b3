use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "psp", version, about = "Perceptual-similarity preprocessing of opinion scores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus (truth, scores, embeddings).
    Synth(SynthArgs),
    /// Degrade labels with Gaussian noise or annotator subsampling.
    Simulate(SimulateArgs),
    /// Compute classical descriptors for a directory of PGM/PPM images.
    Extract(ExtractArgs),
    /// Refine scores and write cleaned scores, trajectory and scorer weights.
    Refine(RefineArgs),
    /// Aggregate scores with MOS or the annotator MLE model.
    Baseline(BaselineArgs),
    /// Compare one or more score files against truth.
    Evaluate(EvaluateArgs),
    /// Repeat simulate, refine and evaluate over an axis of values and seeds.
    Sweep(SweepArgs),
    /// Run the synthetic recovery benchmark over a list of seeds.
    Bench(BenchArgs),
    /// Show how one item's cleaned score was produced in a refine run.
    Explain(ExplainArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct ManifestArg {
    /// Flat TOML manifest; flags override its values.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct RefineFlags {
    #[arg(long)]
    pub ema: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Reference the raw neighbour label instead of its refined score.
    #[arg(long)]
    pub no_score_matrix: bool,
}

#[derive(Args, Debug, Default, Clone)]
pub struct NoiseFlags {
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    /// `gaussian` or `subsample`.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct EmbeddingFlags {
    /// PSPE or CSV embedding file.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Directory of PGM/PPM images to describe instead.
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Multi-opinion scores to subsample from.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub noise: NoiseFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output scores CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
    /// Output embedding file; `.csv` selects CSV, anything else PSPE.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Optional truth; joins the score normalization when given.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub embeddings: EmbeddingFlags,
    /// Neighbour cache to load, or to create when missing.
    #[arg(long)]
    pub index_cache: Option<PathBuf>,
    #[command(flatten)]
    pub refine: RefineFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write scores mapped back to the input scale.
    #[arg(long)]
    pub denormalize: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// `mos` or `mle`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub denormalize: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// `[label=]path`; repeat for several methods.
    #[arg(long)]
    pub scores: Vec<String>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Prediction column to read instead of the automatic choice.
    #[arg(long)]
    pub column: Option<String>,
    /// Output directory for `evaluation.csv` and `evaluation.md`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    /// `ema`, `noise-rate`, `sigma` or `warmup`.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Comma-separated seeds; `a..b` ranges allowed.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub embeddings: EmbeddingFlags,
    #[command(flatten)]
    pub noise: NoiseFlags,
    #[command(flatten)]
    pub refine: RefineFlags,
    #[arg(long)]
    pub denormalize: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// `svg` writes a line chart of SROCC against the axis.
    #[arg(long)]
    pub plot: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub manifest: ManifestArg,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[command(flatten)]
    pub noise: NoiseFlags,
    #[command(flatten)]
    pub refine: RefineFlags,
    /// Comma-separated seeds; `a..b` ranges allowed.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    /// Output directory of a refine run.
    pub run: PathBuf,
    pub item: String,
}

/// Parses `0,3,5..8` into `[0, 3, 5, 6, 7]`.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
                let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range `{part}`"))?;
                if b <= a {
                    return Err(format!("empty seed range `{part}`"));
                }
                out.extend(a..b);
            }
            None => out.push(part.parse().map_err(|_| format!("bad seed `{part}`"))?),
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}
