//! Flat TOML experiment manifests.
//!
//! Keys mirror the long flag names with `-` replaced by `_`. A value given
//! on the command line wins over the manifest, which wins over the built-in
//! default. Every command writes the values it actually used back out as a
//! manifest beside its outputs, so `--manifest <that file>` repeats the run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: Option<u32>,
    pub command: Option<String>,

    pub scores: Option<Vec<String>>,
    pub truth: Option<String>,
    pub embeddings: Option<String>,
    pub images_dir: Option<String>,
    pub index_cache: Option<String>,
    pub out: Option<String>,
    pub column: Option<String>,

    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,

    pub ema: Option<f64>,
    pub warmup: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub hidden: Option<usize>,
    pub no_score_matrix: Option<bool>,
    pub denormalize: Option<bool>,

    pub sigma: Option<f64>,
    pub noise_rate: Option<f64>,
    pub mode: Option<String>,

    pub method: Option<String>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,

    pub items: Option<usize>,
    pub dim: Option<usize>,
    pub rho: Option<f64>,

    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
    pub jobs: Option<usize>,
    pub plot: Option<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| CliError::input(e.to_string()))?;
        match m.schema_version {
            Some(SCHEMA_VERSION) => Ok(m),
            Some(v) => Err(CliError::input(format!(
                "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
            ))),
            None => Err(CliError::input("manifest lacks schema_version")),
        }
    }

    pub fn optional(path: Option<&Path>) -> CliResult<Self> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }

    pub fn resolved(command: &str) -> Self {
        Manifest {
            schema_version: Some(SCHEMA_VERSION),
            command: Some(command.to_string()),
            ..Default::default()
        }
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::internal(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_toml()?)
            .map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
    }
}

/// Flag, then manifest, then default.
pub fn pick<T>(flag: Option<T>, manifest: Option<T>, default: T) -> T {
    flag.or(manifest).unwrap_or(default)
}

/// Like [`pick`] for values without a default.
pub fn pick_opt<T>(flag: Option<T>, manifest: Option<T>) -> Option<T> {
    flag.or(manifest)
}

/// Flag or manifest value that must be present.
pub fn require<T>(flag: Option<T>, manifest: Option<T>, name: &str) -> CliResult<T> {
    pick_opt(flag, manifest).ok_or_else(|| CliError::input(format!("--{name} is required")))
}
