//! Steps shared by several commands. Everything here works on `f64`.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::{debug, info};
use psp_core::dataset::{Dataset, Item, Opinion, ScoreMap, ScoreRecord};
use psp_core::features::{extract_classical, import_embeddings, load_image, EmbeddingTable};
use psp_core::io::csv::{
    read_neighbor_cache_csv, read_predictions, write_cleaned, write_neighbor_cache_csv, write_scores,
    CleanedRow, StepRow,
};
use psp_core::metrics::MetricReport;
use psp_core::nnindex::{build_index, NeighborDictionary};
use psp_core::refine::{RefineConfig, RefineResult};
use psp_core::scorer::TrainConfig;
use psp_core::simulate::{simulate, NoiseMode, SimulationConfig};
use rayon::prelude::*;

use crate::args::{EmbeddingFlags, NoiseFlags, RefineFlags};
use crate::error::{CliError, CliResult};
use crate::manifest::{pick, pick_opt, Manifest};

const IMAGE_EXTENSIONS: [&str; 3] = ["pgm", "ppm", "pnm"];

pub fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))
}

/// Describes every PGM/PPM file in `dir`; ids are file stems.
pub fn extract_dir(dir: &Path) -> CliResult<EmbeddingTable<f64>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if path.is_file() && IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::input(format!("no PGM/PPM images in {}", dir.display())));
    }
    let vectors = files
        .par_iter()
        .map(|p| {
            let img = load_image::<f64>(p)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            let v = extract_classical(&img).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            Ok(v)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut table = EmbeddingTable::new(psp_core::features::CLASSICAL_DIM);
    for (path, v) in files.iter().zip(vectors) {
        let id = path.file_stem().expect("file has a name").to_string_lossy().into_owned();
        table.insert(id, v)?;
    }
    info!("described {} images from {}", table.len(), dir.display());
    Ok(table.finalize()?)
}

/// The embedding source named by flags or manifest, recorded into `resolved`.
pub fn load_embeddings(flags: &EmbeddingFlags, m: &Manifest, resolved: &mut Manifest) -> CliResult<EmbeddingTable<f64>> {
    let file = pick_opt(flags.embeddings.as_deref().map(path_string), m.embeddings.clone());
    let images = pick_opt(flags.images_dir.as_deref().map(path_string), m.images_dir.clone());
    match (file, images) {
        (Some(f), None) => {
            resolved.embeddings = Some(f.clone());
            Ok(import_embeddings::<f64>(&f)?)
        }
        (None, Some(d)) => {
            resolved.images_dir = Some(d.clone());
            extract_dir(Path::new(&d))
        }
        (Some(_), Some(_)) => Err(CliError::input("give either --embeddings or --images-dir, not both")),
        (None, None) => Err(CliError::input("--embeddings or --images-dir is required")),
    }
}

pub fn refine_config(flags: &RefineFlags, m: &Manifest, seed: u64, resolved: &mut Manifest) -> CliResult<RefineConfig> {
    let d = RefineConfig::default();
    let t = TrainConfig::default();
    let cfg = RefineConfig {
        ema_alpha: pick(flags.ema, m.ema, d.ema_alpha),
        warmup: pick(flags.warmup, m.warmup, d.warmup),
        epochs: pick(flags.epochs, m.epochs, d.epochs),
        train: TrainConfig {
            lr: pick(flags.lr, m.lr, t.lr),
            batch: pick(flags.batch, m.batch, t.batch),
            hidden: pick(flags.hidden, m.hidden, t.hidden),
            epochs: t.epochs,
            seed,
        },
        use_score_matrix: !pick(flags.no_score_matrix.then_some(true), m.no_score_matrix, false),
        seed,
    };
    cfg.validate()?;
    resolved.ema = Some(cfg.ema_alpha);
    resolved.warmup = Some(cfg.warmup);
    resolved.epochs = Some(cfg.epochs);
    resolved.lr = Some(cfg.train.lr);
    resolved.batch = Some(cfg.train.batch);
    resolved.hidden = Some(cfg.train.hidden);
    resolved.no_score_matrix = Some(!cfg.use_score_matrix);
    Ok(cfg)
}

pub fn simulation_config(flags: &NoiseFlags, m: &Manifest, seed: u64, resolved: &mut Manifest) -> CliResult<SimulationConfig> {
    let d = SimulationConfig::default();
    let mode: NoiseMode = match pick_opt(flags.mode.clone(), m.mode.clone()) {
        Some(s) => s.parse()?,
        None => d.mode,
    };
    let cfg = SimulationConfig {
        sigma: pick(flags.sigma, m.sigma, d.sigma),
        noise_rate: pick(flags.noise_rate, m.noise_rate, d.noise_rate),
        mode,
        seed,
    };
    cfg.validate()?;
    resolved.sigma = Some(cfg.sigma);
    resolved.noise_rate = Some(cfg.noise_rate);
    resolved.mode = Some(cfg.mode.to_string());
    Ok(cfg)
}

/// Groups score rows by item in first-occurrence order.
fn group(records: &[ScoreRecord<f64>]) -> Vec<(String, Vec<Opinion<f64>>)> {
    let mut order: Vec<(String, Vec<Opinion<f64>>)> = Vec::new();
    let mut at: HashMap<&str, usize> = HashMap::new();
    for r in records {
        let k = *at.entry(r.item_id.as_str()).or_insert_with(|| {
            order.push((r.item_id.clone(), Vec::new()));
            order.len() - 1
        });
        order[k].1.push(Opinion::new(r.annotator_id.clone(), r.score));
    }
    order
}

/// Unit-range inputs are used as they are; anything else is min-max mapped
/// for the simulation and mapped back on output.
fn unit_map(values: impl Iterator<Item = f64> + Clone) -> CliResult<ScoreMap<f64>> {
    if values.clone().all(|v| (0.0..=1.0).contains(&v)) {
        Ok(ScoreMap::identity())
    } else {
        Ok(ScoreMap::fit(&values.collect::<Vec<_>>())?)
    }
}

/// Degrades score files. Gaussian mode needs truth; subsample mode needs
/// scores and uses truth only when given.
pub fn simulate_records(
    truth: Option<&[(String, f64)]>,
    scores: Option<&[ScoreRecord<f64>]>,
    config: &SimulationConfig,
) -> CliResult<Vec<ScoreRecord<f64>>> {
    let truth_map: HashMap<&str, f64> = truth
        .unwrap_or_default()
        .iter()
        .map(|(id, v)| (id.as_str(), *v))
        .collect();
    let grouped: Vec<(String, Vec<Opinion<f64>>, Option<f64>)> = match config.mode {
        NoiseMode::Gaussian => {
            let truth = truth.ok_or_else(|| CliError::input("gaussian mode needs --truth"))?;
            truth
                .iter()
                .map(|(id, t)| (id.clone(), vec![Opinion::new("truth", *t)], Some(*t)))
                .collect()
        }
        NoiseMode::Subsample => {
            let scores = scores.ok_or_else(|| CliError::input("subsample mode needs --scores"))?;
            group(scores)
                .into_iter()
                .map(|(id, ops)| {
                    let t = truth_map.get(id.as_str()).copied();
                    (id, ops, t)
                })
                .collect()
        }
    };
    if grouped.is_empty() {
        return Err(CliError::input("no items to simulate"));
    }
    let map = unit_map(
        grouped
            .iter()
            .flat_map(|(_, ops, t)| ops.iter().map(|o| o.score).chain(*t)),
    )?;
    let items = grouped
        .into_iter()
        .map(|(id, ops, t)| Item {
            id,
            embedding: vec![1.0],
            raw_scores: ops.into_iter().map(|o| Opinion::new(o.annotator, map.apply(o.score))).collect(),
            true_mos: t.map(|x| map.apply(x)),
        })
        .collect();
    let noisy = simulate(&Dataset::new(items, map)?, config)?;
    Ok(noisy
        .items()
        .iter()
        .flat_map(|it| {
            it.raw_scores.iter().map(|o| ScoreRecord {
                item_id: it.id.clone(),
                annotator_id: o.annotator.clone(),
                score: map.invert(o.score),
            })
        })
        .collect())
}

/// A dataset for commands that never look at embeddings.
pub fn scores_only_dataset(records: &[ScoreRecord<f64>]) -> CliResult<Dataset<f64>> {
    let mut table = EmbeddingTable::new(1);
    let mut seen = HashSet::new();
    for r in records {
        if seen.insert(r.item_id.as_str()) {
            table.insert(r.item_id.clone(), vec![1.0])?;
        }
    }
    Ok(Dataset::assemble(records, &table, None)?)
}

/// Loads the cache when it exists, otherwise builds the index and, if a path
/// was given, stores it there.
pub fn neighbor_index(dataset: &Dataset<f64>, cache: Option<&Path>) -> CliResult<NeighborDictionary<f64>> {
    if let Some(path) = cache.filter(|p| p.exists()) {
        debug!("loading neighbour cache {}", path.display());
        let rows = read_neighbor_cache_csv(path)?;
        return NeighborDictionary::from_cache(dataset, &rows)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())));
    }
    let dict = build_index(dataset)?;
    if let Some(path) = cache {
        write_neighbor_cache_csv(path, &dict.to_cache(dataset))?;
    }
    Ok(dict)
}

pub fn cleaned_rows(dataset: &Dataset<f64>, result: &RefineResult<f64>, denormalize: bool) -> Vec<CleanedRow<f64>> {
    let map = dataset.normalization();
    dataset
        .items()
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let (raw, clean) = (result.initial.get(i), result.cleaned.get(i));
            CleanedRow {
                item_id: it.id.clone(),
                score_raw: raw,
                score_clean: clean,
                denorm: denormalize.then(|| (map.invert(raw), map.invert(clean))),
            }
        })
        .collect()
}

pub fn step_rows(dataset: &Dataset<f64>, result: &RefineResult<f64>) -> Vec<StepRow<f64>> {
    result
        .final_step
        .iter()
        .enumerate()
        .map(|(i, s)| StepRow {
            item_id: dataset.item(i).id.clone(),
            score_raw: result.initial.get(i),
            reference_id: dataset.item(s.reference).id.clone(),
            similarity: s.similarity,
            residual: s.residual,
            reference_score: s.reference_score,
            target: s.target,
            previous: s.previous,
            updated: s.updated,
            applied: s.applied,
        })
        .collect()
}

/// Predictions exactly as `evaluate` would read them back from disk.
pub fn predictions_of_cleaned(rows: &[CleanedRow<f64>]) -> CliResult<Vec<(String, f64)>> {
    let mut buf = Vec::new();
    write_cleaned(&mut buf, rows)?;
    Ok(read_predictions(buf.as_slice(), None)?)
}

pub fn predictions_of_scores(rows: &[ScoreRecord<f64>]) -> CliResult<Vec<(String, f64)>> {
    let mut buf = Vec::new();
    write_scores(&mut buf, rows)?;
    Ok(read_predictions(buf.as_slice(), None)?)
}

/// Orders predictions by the truth file; both must cover the same ids.
pub fn align(label: &str, predictions: &[(String, f64)], truth: &[(String, f64)]) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let pred: HashMap<&str, f64> = predictions.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let mut truth_ids = HashSet::new();
    for (id, _) in truth {
        if !truth_ids.insert(id.as_str()) {
            return Err(CliError::input(format!("truth lists `{id}` twice")));
        }
    }
    let mut missing_truth: Vec<&str> = pred.keys().copied().filter(|k| !truth_ids.contains(k)).collect();
    let mut missing_pred: Vec<&str> = truth.iter().map(|(k, _)| k.as_str()).filter(|k| !pred.contains_key(k)).collect();
    if !missing_truth.is_empty() || !missing_pred.is_empty() {
        missing_truth.sort_unstable();
        missing_pred.sort_unstable();
        let mut msg = format!("`{label}` and the truth file cover different items");
        if !missing_truth.is_empty() {
            msg.push_str(&format!("; only in `{label}`: {}", missing_truth.join(", ")));
        }
        if !missing_pred.is_empty() {
            msg.push_str(&format!("; only in truth: {}", missing_pred.join(", ")));
        }
        return Err(CliError::input(msg));
    }
    Ok(truth.iter().map(|(id, t)| (pred[id.as_str()], *t)).unzip())
}

pub fn evaluate_against(label: &str, predictions: &[(String, f64)], truth: &[(String, f64)]) -> CliResult<MetricReport<f64>> {
    let (p, t) = align(label, predictions, truth)?;
    Ok(MetricReport::compute(&p, &t)?)
}
