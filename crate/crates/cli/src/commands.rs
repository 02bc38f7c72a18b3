//! One function per subcommand. Each returns the text meant for stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use psp_core::baselines::{mle_aggregate, mos};
use psp_core::bench::{self, BenchmarkConfig};
use psp_core::dataset::{Dataset, ScoreRecord};
use psp_core::features::EmbeddingTable;
use psp_core::io::csv::{
    read_predictions_csv, read_scores_csv, read_steps_csv, read_truth_csv, write_annotator_model_csv,
    write_cleaned_csv, write_embeddings_csv, write_neighbor_cache_csv, write_scores_csv, write_steps_csv,
    write_trajectory_csv, write_truth_csv, CleanedRow,
};
use psp_core::io::pspe;
use psp_core::metrics::MetricReport;
use psp_core::refine::{ema_update, refine, RefineConfig};
use psp_core::simulate::{generate_synthetic, SimulationConfig, SyntheticSpec};
use rayon::prelude::*;

use crate::args::{
    parse_seed_list, BaselineArgs, BenchArgs, ExplainArgs, ExtractArgs, RefineArgs, SimulateArgs, SweepArgs,
    SynthArgs,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{pick, pick_opt, require, Manifest};
use crate::pipeline::{self, path_string};
use crate::report::{line_chart_svg, mean_std, metric_values, write_text, Series, Table, METRIC_COLUMNS};

pub const MANIFEST_FILE: &str = "manifest.toml";

fn out_dir(flag: Option<&Path>, m: &Manifest, resolved: &mut Manifest) -> CliResult<PathBuf> {
    let out = require(flag.map(path_string), m.out.clone(), "out")?;
    resolved.out = Some(out.clone());
    let dir = PathBuf::from(out);
    pipeline::ensure_dir(&dir)?;
    Ok(dir)
}

fn out_file(flag: Option<&Path>, m: &Manifest, resolved: &mut Manifest) -> CliResult<PathBuf> {
    let out = require(flag.map(path_string), m.out.clone(), "out")?;
    resolved.out = Some(out.clone());
    let file = PathBuf::from(out);
    if let Some(parent) = file.parent().filter(|p| !p.as_os_str().is_empty()) {
        pipeline::ensure_dir(parent)?;
    }
    Ok(file)
}

/// `noisy.csv` gets `noisy.manifest.toml`.
fn manifest_beside(file: &Path) -> PathBuf {
    file.with_extension("manifest.toml")
}

fn single_scores(m: &Manifest) -> CliResult<Option<String>> {
    match m.scores.as_deref() {
        None => Ok(None),
        Some([one]) => Ok(Some(one.clone())),
        Some(_) => Err(CliError::input("this command takes a single `scores` entry")),
    }
}

fn seeds(flag: Option<&str>, m: &Manifest, default: Vec<u64>) -> CliResult<Vec<u64>> {
    let list = match flag {
        Some(s) => parse_seed_list(s).map_err(CliError::input)?,
        None => m.seeds.clone().unwrap_or(default),
    };
    if list.is_empty() {
        return Err(CliError::input("empty seed list"));
    }
    Ok(list)
}

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::internal(e.to_string()))
}

fn metric_cells(r: &MetricReport<f64>) -> Vec<String> {
    metric_values(r).iter().map(f64::to_string).collect()
}

pub fn synth(a: &SynthArgs) -> CliResult<String> {
    let m = Manifest::optional(a.manifest.manifest.as_deref())?;
    let mut r = Manifest::resolved("synth");
    let spec = SyntheticSpec {
        n_items: pick(a.items, m.items, 500),
        dim: pick(a.dim, m.dim, 16),
        quality_signal_corr: pick(a.rho, m.rho, 0.9),
        seed: pick(a.seed, m.seed, 0),
    };
    r.items = Some(spec.n_items);
    r.dim = Some(spec.dim);
    r.rho = Some(spec.quality_signal_corr);
    r.seed = Some(spec.seed);
    let dir = out_dir(a.out.as_deref(), &m, &mut r)?;
    let ds = generate_synthetic::<f64>(&spec)?;

    let truth: Vec<(String, f64)> = ds
        .items()
        .iter()
        .map(|it| (it.id.clone(), it.true_mos.expect("synthetic truth")))
        .collect();
    let scores: Vec<ScoreRecord<f64>> = ds
        .items()
        .iter()
        .flat_map(|it| {
            it.raw_scores.iter().map(|o| ScoreRecord {
                item_id: it.id.clone(),
                annotator_id: o.annotator.clone(),
                score: o.score,
            })
        })
        .collect();
    let mut table = EmbeddingTable::new(ds.dim());
    for it in ds.items() {
        table.insert(it.id.clone(), it.embedding.clone())?;
    }
    write_truth_csv(dir.join("truth.csv"), &truth)?;
    write_scores_csv(dir.join("scores.csv"), &scores)?;
    pspe::write_embeddings(dir.join("embeddings.pspe"), &table)?;
    r.write(&dir.join(MANIFEST_FILE))?;
    Ok(format!("wrote {} items to {}\n", ds.len(), dir.display()))
}

pub fn simulate(a: &SimulateArgs) -> CliResult<String> {
    let m = Manifest::optional(a.manifest.manifest.as_deref())?;
    let mut r = Manifest::resolved("simulate");
    let seed = pick(a.seed, m.seed, 0);
    r.seed = Some(seed);
    let cfg = pipeline::simulation_config(&a.noise, &m, seed, &mut r)?;
    let truth_path = pick_opt(a.truth.as_deref().map(path_string), m.truth.clone());
    let scores_path = pick_opt(a.scores.as_deref().map(path_string), single_scores(&m)?);
    let truth = truth_path.as_deref().map(read_truth_csv::<f64>).transpose()?;
    let scores = scores_path.as_deref().map(read_scores_csv::<f64>).transpose()?;
    r.truth = truth_path;
    r.scores = scores_path.map(|s| vec![s]);
    let out = out_file(a.out.as_deref(), &m, &mut r)?;

    let noisy = pipeline::simulate_records(truth.as_deref(), scores.as_deref(), &cfg)?;
    write_scores_csv(&out, &noisy)?;
    r.write(&manifest_beside(&out))?;
    Ok(format!("wrote {} score rows to {}\n", noisy.len(), out.display()))
}

pub fn extract(a: &ExtractArgs) -> CliResult<String> {
    let m = Manifest::optional(a.manifest.manifest.as_deref())?;
    let mut r = Manifest::resolved("extract");
    let dir = require(a.images_dir.as_deref().map(path_string), m.images_dir.clone(), "images-dir")?;
    r.images_dir = Some(dir.clone());
    let out = out_file(a.out.as_deref(), &m, &mut r)?;
    let table = pipeline::extract_dir(Path::new(&dir))?;
    let is_csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        write_embeddings_csv(&out, &table)?;
    } else {
        pspe::write_embeddings(&out, &table)?;
    }
    r.write(&manifest_beside(&out))?;
    Ok(format!("wrote {} embeddings to {}\n", table.len(), out.display()))
}

pub fn refine_cmd(a: &RefineArgs) -> CliResult<String> {
    let m = Manifest::optional(a.manifest.manifest.as_deref())?;
    let mut r = Manifest::resolved("refine");
    let scores_path = require(a.scores.as_deref().map(path_string), single_scores(&m)?, "scores")?;
    let truth_path = pick_opt(a.truth.as_deref().map(path_string), m.truth.clone());
    let seed = pick(a.seed, m.seed, 0);
    r.scores = Some(vec![scores_path.clone()]);
    r.truth = truth_path.clone();
    r.seed = Some(seed);
    let cfg = pipeline::refine_config(&a.refine, &m, seed, &mut r)?;
    let denormalize = pick(a.denormalize.then_some(true), m.denormalize, false);
    r.denormalize = Some(denormalize);
    let cache = pick_opt(a.index_cache.as_deref().map(path_string), m.index_cache.clone());
    r.index_cache = cache.clone();

    let records = read_scores_csv::<f64>(&scores_path)?;
    let truth = truth_path.as_deref().map(read_truth_csv::<f64>).transpose()?;
    let table = pipeline::load_embeddings(&a.embeddings, &m, &mut r)?;
    let dir = out_dir(a.out.as_deref(), &m, &mut r)?;

    let dataset = Dataset::assemble(&records, &table, truth.as_deref())?;
    let dict = pipeline::neighbor_index(&dataset, cache.as_deref().map(Path::new))?;
    let result = refine(&dataset, &dict, &cfg)?;
    if let Some(last) = result.trajectory.last() {
        info!(
            "refined {} items; last epoch mean |update| {} loss {}",
            dataset.len(),
            last.mean_abs_update,
            last.train_loss
        );
    }

    write_cleaned_csv(dir.join("cleaned.csv"), &pipeline::cleaned_rows(&dataset, &result, denormalize))?;
    write_trajectory_csv(dir.join("trajectory.csv"), &result.trajectory_rows())?;
    write_steps_csv(dir.join("steps.csv"), &pipeline::step_rows(&dataset, &result))?;
    write_neighbor_cache_csv(dir.join("index.csv"), &dict.to_cache(&dataset))?;
    pspe::write_params(dir.join("params.pspw"), &result.params)?;
    r.write(&dir.join(MANIFEST_FILE))?;
    Ok(format!("refined {} items into {}\n", dataset.len(), dir.display()))
}

pub fn baseline(a: &BaselineArgs) -> CliResult<String> {
    let m = Manifest::optional(a.manifest.manifest.as_deref())?;
    let mut r = Manifest::resolved("baseline");
    let scores_path = require(a.scores.as_deref().map(path_string), single_scores(&m)?, "scores")?;
    let method = pick(a.method.clone(), m.method.clone(), "mos".to_string());
    let denormalize = pick(a.denormalize.then_some(true), m.denormalize, false);
    r.scores = Some(vec![scores_path.clone()]);
    r.method = Some(method.clone());
    r.denormalize = Some(denormalize);

    let records = read_scores_csv::<f64>(&scores_path)?;
    let dataset = pipeline::scores_only_dataset(&records)?;
    let raw = mos(&dataset)?;
    let (estimate, model) = match method.as_str() {
        "mos" => (raw.clone(), None),
        "mle" => {
            let max_iters = pick(a.max_iters, m.max_iters, 500);
            let tol = pick(a.tol, m.tol, 1e-9);
            if !(tol > 0.0) {
                return Err(CliError::input(format!("--tol must be > 0, got {tol}")));
            }
            r.max_iters = Some(max_iters);
            r.tol = Some(tol);
            let out = mle_aggregate(&dataset, max_iters, tol)?;
            if !out.converged {
                warn!("annotator model stopped after {} iterations without converging", out.iterations);
            }
            (out.scores, Some(out.model))
        }
        other => return Err(CliError::input(format!("unknown method `{other}` (expected mos or mle)"))),
    };
    let dir = out_dir(a.out.as_deref(), &m, &mut r)?;
    let map = dataset.normalization();
    let rows: Vec<CleanedRow<f64>> = dataset
        .items()
        .iter()
        .enumerate()
        .map(|(i, it)| CleanedRow {
            item_id: it.id.clone(),
            score_raw: raw.get(i),
            score_clean: estimate.get(i),
            denorm: denormalize.then(|| (map.invert(raw.get(i)), map.invert(estimate.get(i)))),
        })
        .collect();
    write_cleaned_csv(dir.join("cleaned.csv"), &rows)?;
    if let Some(model) = model {
        write_annotator_model_csv(dir.join("annotators.csv"), &model.rows())?;
    }
    r.write(&dir.join(MANIFEST_FILE))?;
    Ok(format!("wrote {method} scores for {} items to {}\n", dataset.len(), dir.display()))
}

/// `label=path`, or a bare path labelled by itself.
fn labelled(spec: &str) -> (String, String) {
    match spec.split_once('=') {
        Some((l, p)) if !l.is_empty() && !p.is_empty() => (l.to_string(), p.to_string()),
        _ => (spec.to_string(), spec.to_string()),
    }
}

pub fn evaluate(a: &crate::args::EvaluateArgs) -> CliResult<String> {
    let m = Manifest::optional(a.manifest.manifest.as_deref())?;
    let mut r = Manifest::resolved("evaluate");
    let specs = if a.scores.is_empty() {
        m.scores.clone().unwrap_or_default()
    } else {
        a.scores.clone()
    };
    if specs.is_empty() {
        return Err(CliError::input("--scores is required"));
    }
    let truth_path = require(a.truth.as_deref().map(path_string), m.truth.clone(), "truth")?;
    let column = pick_opt(a.column.clone(), m.column.clone());
    r.scores = Some(specs.clone());
    r.truth = Some(truth_path.clone());
    r.column = column.clone();

    let truth = read_truth_csv::<f64>(&truth_path)?;
    let mut table = Table::new(std::iter::once("method").chain(METRIC_COLUMNS));
    for spec in &specs {
        let (label, path) = labelled(spec);
        let preds = read_predictions_csv::<f64>(&path, column.as_deref())?;
        let report = pipeline::evaluate_against(&label, &preds, &truth)?;
        if report.degenerate {
            warn!("`{label}`: a correlation was undefined (constant input) and reported as 0");
        }
        let mut row = vec![label];
        row.extend(metric_cells(&report));
        table.push(row);
    }
    let md = table.to_markdown(4);
    let out = pick_opt(a.out.as_deref().map(path_string), m.out.clone());
    if let Some(out) = out {
        let dir = out_dir(Some(Path::new(&out)), &m, &mut r)?;
        write_text(&dir.join("evaluation.csv"), &table.to_csv()?)?;
        write_text(&dir.join("evaluation.md"), &md)?;
        r.write(&dir.join(MANIFEST_FILE))?;
    }
    Ok(md)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Ema,
    NoiseRate,
    Sigma,
    Warmup,
}

impl Axis {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "ema" => Ok(Axis::Ema),
            "noise-rate" => Ok(Axis::NoiseRate),
            "sigma" => Ok(Axis::Sigma),
            "warmup" => Ok(Axis::Warmup),
            other => Err(CliError::input(format!(
                "unknown axis `{other}` (expected ema, noise-rate, sigma or warmup)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Ema => "ema",
            Axis::NoiseRate => "noise-rate",
            Axis::Sigma => "sigma",
            Axis::Warmup => "warmup",
        }
    }

    /// Configurations for one cell, validated.
    fn apply(self, value: f64, sim: &SimulationConfig, refine: &RefineConfig, seed: u64) -> CliResult<(SimulationConfig, RefineConfig)> {
        let mut s = SimulationConfig { seed, ..sim.clone() };
        let mut r = RefineConfig { seed, ..refine.clone() };
        r.train.seed = seed;
        match self {
            Axis::Ema => r.ema_alpha = value,
            Axis::NoiseRate => s.noise_rate = value,
            Axis::Sigma => s.sigma = value,
            Axis::Warmup => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(CliError::input(format!("warmup values must be whole numbers, got {value}")));
                }
                r.warmup = value as usize;
            }
        }
        s.validate()?;
        r.validate()?;
        Ok((s, r))
    }
}

struct Cell {
    mos: MetricReport<f64>,
    psp: MetricReport<f64>,
}

const SUMMARY_COLUMNS: [&str; 8] = [
    "srocc_mean", "srocc_std", "plcc_mean", "plcc_std", "krocc_mean", "krocc_std", "mse_mean", "mse_std",
];

fn summary_cells(reports: &[&MetricReport<f64>]) -> Vec<String> {
    (0..METRIC_COLUMNS.len())
        .flat_map(|k| {
            let xs: Vec<f64> = reports.iter().map(|r| metric_values(r)[k]).collect();
            let (mean, std) = mean_std(&xs);
            [mean.to_string(), std.to_string()]
        })
        .collect()
}

pub fn sweep(a: &SweepArgs) -> CliResult<String> {
    let m = Manifest::optional(a.manifest.manifest.as_deref())?;
    let mut r = Manifest::resolved("sweep");
    let axis = Axis::parse(&require(a.axis.clone(), m.axis.clone(), "axis")?)?;
    let values = if a.values.is_empty() { m.values.clone().unwrap_or_default() } else { a.values.clone() };
    if values.is_empty() {
        return Err(CliError::input("empty axis value list"));
    }
    let seeds = seeds(a.seeds.as_deref(), &m, vec![0])?;
    let jobs = pick(a.jobs, m.jobs, 0);
    let plot = pick_opt(a.plot.clone(), m.plot.clone());
    if let Some(p) = plot.as_deref().filter(|p| *p != "svg") {
        return Err(CliError::input(format!("unknown plot format `{p}` (expected svg)")));
    }
    let denormalize = pick(a.denormalize.then_some(true), m.denormalize, false);
    r.axis = Some(axis.name().to_string());
    r.values = Some(values.clone());
    r.seeds = Some(seeds.clone());
    r.jobs = Some(jobs);
    r.plot = plot.clone();
    r.denormalize = Some(denormalize);

    let sim = pipeline::simulation_config(&a.noise, &m, 0, &mut r)?;
    let refine_base = pipeline::refine_config(&a.refine, &m, 0, &mut r)?;
    let cells: Vec<(f64, u64)> = values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let configs = cells
        .iter()
        .map(|&(v, s)| axis.apply(v, &sim, &refine_base, s))
        .collect::<CliResult<Vec<_>>>()?;

    let truth_path = require(a.truth.as_deref().map(path_string), m.truth.clone(), "truth")?;
    let scores_path = pick_opt(a.scores.as_deref().map(path_string), single_scores(&m)?);
    r.truth = Some(truth_path.clone());
    r.scores = scores_path.clone().map(|s| vec![s]);
    let truth = read_truth_csv::<f64>(&truth_path)?;
    let scores = scores_path.as_deref().map(read_scores_csv::<f64>).transpose()?;
    let table = pipeline::load_embeddings(&a.embeddings, &m, &mut r)?;
    let dir = out_dir(a.out.as_deref(), &m, &mut r)?;

    // Items keep the same order in every cell, so one index serves all.
    let first = pipeline::simulate_records(Some(&truth), scores.as_deref(), &configs[0].0)?;
    let base = Dataset::assemble(&first, &table, Some(&truth))?;
    let dict = pipeline::neighbor_index(&base, None)?;

    let run_cell = |(sim, refine_cfg): &(SimulationConfig, RefineConfig)| -> CliResult<Cell> {
        let noisy = pipeline::simulate_records(Some(&truth), scores.as_deref(), sim)?;
        let dataset = Dataset::assemble(&noisy, &table, Some(&truth))?;
        if dataset.items().iter().zip(base.items()).any(|(x, y)| x.id != y.id) {
            return Err(CliError::internal("item order changed between sweep cells"));
        }
        let result = refine(&dataset, &dict, refine_cfg)?;
        let cleaned = pipeline::predictions_of_cleaned(&pipeline::cleaned_rows(&dataset, &result, denormalize))?;
        Ok(Cell {
            mos: pipeline::evaluate_against("mos", &pipeline::predictions_of_scores(&noisy)?, &truth)?,
            psp: pipeline::evaluate_against("psp", &cleaned, &truth)?,
        })
    };
    let results: Vec<Cell> = pool(jobs)?.install(|| configs.par_iter().map(run_cell).collect::<CliResult<Vec<_>>>())?;

    let mut runs = Table::new(["axis", "value", "seed", "method"].into_iter().chain(METRIC_COLUMNS));
    for (&(v, s), cell) in cells.iter().zip(&results) {
        for (name, rep) in [("mos", &cell.mos), ("psp", &cell.psp)] {
            let mut row = vec![axis.name().to_string(), v.to_string(), s.to_string(), name.to_string()];
            row.extend(metric_cells(rep));
            runs.push(row);
        }
    }
    let mut summary = Table::new(["axis", "value", "method", "seeds"].into_iter().chain(SUMMARY_COLUMNS));
    let mut curves: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (vi, &v) in values.iter().enumerate() {
        let group = &results[vi * seeds.len()..(vi + 1) * seeds.len()];
        for (k, name) in ["mos", "psp"].into_iter().enumerate() {
            let reps: Vec<&MetricReport<f64>> = group.iter().map(|c| if k == 0 { &c.mos } else { &c.psp }).collect();
            let mut row = vec![axis.name().to_string(), v.to_string(), name.to_string(), seeds.len().to_string()];
            let cellv = summary_cells(&reps);
            curves[k].push(cellv[0].parse().expect("formatted float"));
            row.extend(cellv);
            summary.push(row);
        }
    }
    write_text(&dir.join("runs.csv"), &runs.to_csv()?)?;
    write_text(&dir.join("sweep.csv"), &summary.to_csv()?)?;
    let md = summary.to_markdown(4);
    write_text(&dir.join("sweep.md"), &md)?;
    if plot.is_some() {
        let [mos_curve, psp_curve] = curves;
        let svg = line_chart_svg(
            &format!("SROCC vs {}", axis.name()),
            axis.name(),
            "mean SROCC",
            &values,
            &[Series { name: "psp", ys: psp_curve }, Series { name: "mos", ys: mos_curve }],
        );
        write_text(&dir.join("sweep.svg"), &svg)?;
    }
    r.write(&dir.join(MANIFEST_FILE))?;
    Ok(md)
}

pub fn bench_cmd(a: &BenchArgs) -> CliResult<String> {
    let m = Manifest::optional(a.manifest.manifest.as_deref())?;
    let mut r = Manifest::resolved("bench");
    let config = BenchmarkConfig {
        n_items: pick(a.items, m.items, 500),
        dim: pick(a.dim, m.dim, 16),
        rho: pick(a.rho, m.rho, 0.9),
        simulation: pipeline::simulation_config(&a.noise, &m, 0, &mut r)?,
        refine: pipeline::refine_config(&a.refine, &m, 0, &mut r)?,
    };
    let seeds = seeds(a.seeds.as_deref(), &m, (0..10).collect())?;
    let jobs = pick(a.jobs, m.jobs, 0);
    r.items = Some(config.n_items);
    r.dim = Some(config.dim);
    r.rho = Some(config.rho);
    r.seeds = Some(seeds.clone());
    r.jobs = Some(jobs);
    let dir = out_dir(a.out.as_deref(), &m, &mut r)?;

    let outcomes = pool(jobs)?.install(|| {
        seeds
            .par_iter()
            .map(|&s| bench::run::<f64>(&config, s).map(|o| (o.noisy, o.refined)))
            .collect::<psp_core::Result<Vec<_>>>()
    })?;
    let mut runs = Table::new(["seed", "method"].into_iter().chain(METRIC_COLUMNS));
    for (&s, (mos_r, psp_r)) in seeds.iter().zip(&outcomes) {
        for (name, rep) in [("mos", mos_r), ("psp", psp_r)] {
            let mut row = vec![s.to_string(), name.to_string()];
            row.extend(metric_cells(rep));
            runs.push(row);
        }
    }
    let mut summary = Table::new(["method", "seeds"].into_iter().chain(SUMMARY_COLUMNS));
    for (k, name) in ["mos", "psp"].into_iter().enumerate() {
        let reps: Vec<&MetricReport<f64>> = outcomes.iter().map(|o| if k == 0 { &o.0 } else { &o.1 }).collect();
        let mut row = vec![name.to_string(), seeds.len().to_string()];
        row.extend(summary_cells(&reps));
        summary.push(row);
    }
    write_text(&dir.join("runs.csv"), &runs.to_csv()?)?;
    write_text(&dir.join("summary.csv"), &summary.to_csv()?)?;
    let md = summary.to_markdown(4);
    write_text(&dir.join("summary.md"), &md)?;
    r.write(&dir.join(MANIFEST_FILE))?;
    Ok(md)
}

pub fn explain(a: &ExplainArgs) -> CliResult<String> {
    let steps = read_steps_csv::<f64>(a.run.join("steps.csv"))?;
    let m = Manifest::load(&a.run.join(MANIFEST_FILE))?;
    let alpha = m.ema.ok_or_else(|| CliError::input("run manifest lacks `ema`"))?;
    let step = steps
        .iter()
        .find(|s| s.item_id == a.item)
        .ok_or_else(|| CliError::input(format!("unknown item `{}`", a.item)))?;
    let cleaned = read_predictions_csv::<f64>(a.run.join("cleaned.csv"), Some("score_clean"))?;
    let clean = cleaned
        .iter()
        .find(|(id, _)| *id == a.item)
        .map(|(_, v)| *v)
        .ok_or_else(|| CliError::input(format!("`{}` missing from cleaned.csv", a.item)))?;
    let recomputed = if step.applied { ema_update(step.target, step.previous, alpha)? } else { step.previous };
    if recomputed != clean {
        warn!("cleaned score {clean} differs from the recomputed update {recomputed}");
    }

    let mut s = String::new();
    let rows: [(&str, String); 12] = [
        ("item", step.item_id.clone()),
        ("raw score", step.score_raw.to_string()),
        ("reference", step.reference_id.clone()),
        ("similarity", step.similarity.to_string()),
        ("residual", step.residual.to_string()),
        ("reference score", step.reference_score.to_string()),
        ("target", step.target.to_string()),
        ("previous", step.previous.to_string()),
        ("ema weight", alpha.to_string()),
        ("applied", if step.applied { "yes" } else { "no" }.to_string()),
        ("cleaned", clean.to_string()),
        ("recomputed", recomputed.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<16}{v}");
    }
    Ok(s)
}
