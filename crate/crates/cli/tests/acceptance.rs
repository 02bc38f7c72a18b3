//! The acceptance gate. Runs every criterion at its stated tolerance and
//! time budget, prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use psp_core::baselines::{mle_aggregate, mos};
use psp_core::bench::{self, BenchmarkConfig};
use psp_core::dataset::{Dataset, Item, Opinion, ScoreMap};
use psp_core::metrics::{krocc, srocc};
use psp_core::nnindex::build_index;
use psp_core::refine::{refine, RefineConfig};
use psp_core::scorer::{grad, init_params, loss, Sample, ScorerParams};
use psp_core::Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn unit(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

fn random_dataset(rng: &mut Rng, n: usize, d: usize, opinions: usize) -> Dataset<f64> {
    let items = (0..n)
        .map(|i| Item {
            id: format!("i{i}"),
            embedding: unit(rng, d),
            raw_scores: (0..opinions)
                .map(|a| Opinion::new(format!("a{}", (i + a) % 7), rng.uniform()))
                .collect(),
            true_mos: None,
        })
        .collect();
    Dataset::new(items, ScoreMap::identity()).unwrap()
}

fn psp(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_psp"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("psp {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn snapshot(dir: &Path, root: &Path, into: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            snapshot(&p, root, into);
        } else {
            into.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
        }
    }
}

fn ema_identity() -> Outcome {
    let t = TempDir::new().map_err(|e| e.to_string())?;
    let d = t.path();
    psp(d, &["synth", "--items", "500", "--out", "corpus"])?;
    psp(d, &["simulate", "--truth", "corpus/truth.csv", "--seed", "1", "--out", "noisy.csv"])?;
    let start = Instant::now();
    psp(
        d,
        &["refine", "--scores", "noisy.csv", "--embeddings", "corpus/embeddings.pspe", "--ema", "1.0", "--out", "run"],
    )?;
    let elapsed = start.elapsed();
    let cleaned = fs::read_to_string(d.join("run/cleaned.csv")).map_err(|e| e.to_string())?;
    let mut rows = 0;
    for line in cleaned.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[1] != f[2] {
            return Err(format!("{}: raw {} != clean {}", f[0], f[1], f[2]));
        }
        rows += 1;
    }
    if rows != 500 {
        return Err(format!("{rows} rows"));
    }
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("refine took {elapsed:?}"));
    }
    // Library level, over varied inputs and settings.
    let mut rng = Rng::new(11);
    for k in 0..20 {
        let ds = random_dataset(&mut rng, 20 + 7 * k, 2 + k % 6, 1 + k % 3);
        let dict = build_index(&ds).unwrap();
        let cfg = RefineConfig { ema_alpha: 1.0, warmup: k % 4, seed: k as u64, use_score_matrix: k % 2 == 0, ..Default::default() };
        let r = refine(&ds, &dict, &cfg).unwrap();
        if r.cleaned.values.iter().zip(&r.initial.values).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err(format!("library case {k} moved"));
        }
    }
    Ok(format!("500 rows bit-equal, CLI refine {elapsed:.2?}, 20 library cases"))
}

fn mle_collapse() -> Outcome {
    let mut rng = Rng::new(2);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let ds = random_dataset(&mut rng, 50 + 25 * k, 2, 1);
        let m = mos(&ds).unwrap();
        let e = mle_aggregate(&ds, 500, 1e-12).unwrap();
        for (a, b) in m.values.iter().zip(&e.scores.values) {
            worst = worst.max((a - b).abs());
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max |mle - mos| = {worst:e} over 20 datasets"))
    } else {
        Err(format!("max |mle - mos| = {worst:e}"))
    }
}

fn gradient_check() -> Outcome {
    let mut rng = Rng::new(3);
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = 1 + rng.below(8);
        let h = 1 + rng.below(4);
        let mut p: ScorerParams<f64> = init_params(d, h, &mut rng).unwrap();
        for w in p.iter_mut() {
            *w *= 1.0 + rng.uniform();
        }
        let n = 1 + rng.below(5);
        let es: Vec<Vec<f64>> = (0..2 * n).map(|_| unit(&mut rng, d)).collect();
        let batch: Vec<Sample<'_, f64>> = (0..n)
            .map(|i| Sample { y: rng.uniform(), e: &es[2 * i], e_ref: &es[2 * i + 1], u_ref: rng.uniform() })
            .collect();
        let analytic: Vec<f64> = grad(&p, &batch).unwrap().iter().copied().collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for j in 0..p.num_weights() {
            let mut plus = p.clone();
            *plus.iter_mut().nth(j).unwrap() += step;
            let mut minus = p.clone();
            *minus.iter_mut().nth(j).unwrap() -= step;
            numeric.push((loss(&plus, &batch).unwrap() - loss(&minus, &batch).unwrap()) / (2.0 * step));
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
    }
    if worst < 1e-4 {
        Ok(format!("max relative error {worst:.2e} over 100 instances"))
    } else {
        Err(format!("max relative error {worst:.2e}"))
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

fn metric_oracles() -> Outcome {
    let mut cases = 0;
    for n in 2..=7usize {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        for p in permutations(n) {
            let y: Vec<f64> = p.iter().map(|&i| i as f64).collect();
            let d2: i64 = p.iter().enumerate().map(|(i, &r)| (i as i64 - r as i64).pow(2)).sum();
            let den = (n * (n * n - 1)) as i64;
            let rho = (den - 6 * d2) as f64 / den as f64;
            let (mut conc, mut disc) = (0i64, 0i64);
            for i in 0..n {
                for j in i + 1..n {
                    if p[i] < p[j] {
                        conc += 1
                    } else {
                        disc += 1
                    }
                }
            }
            let tau = (conc - disc) as f64 / (n * (n - 1) / 2) as f64;
            let (s, k) = (srocc(&x, &y).unwrap().value, krocc(&x, &y).unwrap().value);
            if s != rho || k != tau {
                return Err(format!("{p:?}: srocc {s} vs {rho}, krocc {k} vs {tau}"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} permutations exact (5040 at n=7)"))
}

fn nns_oracle() -> Outcome {
    let mut rng = Rng::new(5);
    for k in 0..50 {
        let n = 2 + rng.below(63);
        let d = 1 + rng.below(8);
        let mut ds = random_dataset(&mut rng, n, d, 1).into_items();
        // Duplicate some embeddings so that ties occur.
        for i in 0..n / 4 {
            let src = rng.below(n);
            let dst = rng.below(n);
            if src != dst && i % 2 == 0 {
                ds[dst].embedding = ds[src].embedding.clone();
            }
        }
        let ds = Dataset::new(ds, ScoreMap::identity()).unwrap();
        let dict = build_index(&ds).unwrap();
        for i in 0..n {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let mut s = 0.0;
                for (a, b) in ds.embedding(i).iter().zip(ds.embedding(j)) {
                    s += a * b;
                }
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((j, s));
                }
            }
            let (j, s) = best.unwrap();
            if dict.neighbors()[i] != j || dict.similarities()[i] != s {
                return Err(format!("dataset {k} item {i}: got ({}, {}) want ({j}, {s})", dict.neighbors()[i], dict.similarities()[i]));
            }
        }
    }
    Ok("50 datasets exact".into())
}

fn antisymmetry() -> Outcome {
    let mut rng = Rng::new(6);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let d = 1 + rng.below(16);
        let h = 1 + rng.below(32);
        let p: ScorerParams<f64> = init_params(d, h, &mut rng).unwrap();
        let a: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        worst = worst.max((p.forward(&a, &b).unwrap() + p.forward(&b, &a).unwrap()).abs());
        if p.forward(&a, &a).unwrap() != 0.0 {
            return Err("nonzero self residual".into());
        }
    }
    if worst <= 1e-9 {
        Ok(format!("max |S(a,b) + S(b,a)| = {worst:e}; S(a,a) = 0 over 10^4 draws"))
    } else {
        Err(format!("max |S(a,b) + S(b,a)| = {worst:e}"))
    }
}

const SEEDS: std::ops::Range<u64> = 0..10;

fn with_refine(f: impl FnOnce(&mut RefineConfig)) -> BenchmarkConfig {
    let mut c = BenchmarkConfig::default();
    f(&mut c.refine);
    c
}

fn bench_runs(config: &BenchmarkConfig) -> Vec<bench::BenchmarkOutcome<f64>> {
    SEEDS.map(|s| bench::run::<f64>(config, s).unwrap()).collect()
}

fn mean_psp(config: &BenchmarkConfig) -> f64 {
    mean(&bench_runs(config).iter().map(|o| o.refined.srocc).collect::<Vec<_>>())
}

fn recovery() -> Outcome {
    let runs = bench_runs(&BenchmarkConfig::default());
    let gains: Vec<f64> = runs.iter().map(|o| o.refined.srocc - o.noisy.srocc).collect();
    let wins = gains.iter().filter(|&&g| g > 0.0).count();
    let mse_wins = runs.iter().filter(|o| o.refined.mse < o.noisy.mse).count();
    let msg = format!("SROCC up in {wins}/10, mean gain {:+.4}, MSE down in {mse_wins}/10", mean(&gains));
    if wins >= 9 && mean(&gains) >= 0.03 && mse_wins >= 9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ablation_ordering() -> Outcome {
    let scores: Vec<f64> = [0.9, 0.8, 0.4, 0.2]
        .iter()
        .map(|&a| mean_psp(&with_refine(|r| r.ema_alpha = a)))
        .collect();
    let msg = format!(
        "mean SROCC a=0.9 {:.4}, a=0.8 {:.4}, a=0.4 {:.4}, a=0.2 {:.4}",
        scores[0], scores[1], scores[2], scores[3]
    );
    if scores.windows(2).all(|w| w[0] > w[1]) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn sigma_gap() -> Outcome {
    let gap = |sigma: f64| {
        let mut c = BenchmarkConfig::default();
        c.simulation.sigma = sigma;
        mean(&bench_runs(&c).iter().map(|o| o.refined.srocc - o.noisy.srocc).collect::<Vec<_>>())
    };
    let (lo, hi) = (gap(0.1), gap(0.3));
    let msg = format!("gap at sigma=0.1 {lo:+.4}, at sigma=0.3 {hi:+.4}");
    if hi > lo {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn warmup_insensitivity() -> Outcome {
    let scores: Vec<f64> = [1usize, 2, 4]
        .iter()
        .map(|&t| mean_psp(&with_refine(|r| {
            r.warmup = t;
            r.epochs = 10;
        })))
        .collect();
    let spread = scores.iter().cloned().fold(f64::MIN, f64::max) - scores.iter().cloned().fold(f64::MAX, f64::min);
    let msg = format!("T=1 {:.4}, T=2 {:.4}, T=4 {:.4}, spread {spread:.4}", scores[0], scores[1], scores[2]);
    if spread <= 0.02 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn score_matrix_ablation() -> Outcome {
    let full = mean_psp(&BenchmarkConfig::default());
    let ablated = mean_psp(&with_refine(|r| r.use_score_matrix = false));
    let msg = format!("full {full:.4}, without score matrix {ablated:.4}");
    if full >= ablated {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn downstream_proxy() -> Outcome {
    let config = BenchmarkConfig::default();
    let mut wins = 0;
    let mut gains = Vec::new();
    for s in SEEDS {
        let o = bench::downstream::<f64>(&config, s, 0.8, 3).unwrap();
        gains.push(o.trained_on_refined.srocc - o.trained_on_noisy.srocc);
        if o.trained_on_refined.srocc > o.trained_on_noisy.srocc {
            wins += 1;
        }
    }
    let msg = format!("k=3 proxy better on refined labels in {wins}/10 seeds, mean gain {:+.4}", mean(&gains));
    if wins >= 8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn determinism() -> Outcome {
    let t = TempDir::new().map_err(|e| e.to_string())?;
    let d = t.path();
    let manifests = [
        ("bench.toml", "schema_version = 1\nout = \"out/bench\"\nseeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]\n"),
        ("synth.toml", "schema_version = 1\nout = \"out/corpus\"\nitems = 500\nseed = 3\n"),
        ("simulate.toml", "schema_version = 1\ntruth = \"out/corpus/truth.csv\"\nout = \"out/noisy.csv\"\nseed = 3\n"),
        (
            "refine.toml",
            "schema_version = 1\nscores = [\"out/noisy.csv\"]\ntruth = \"out/corpus/truth.csv\"\nembeddings = \"out/corpus/embeddings.pspe\"\nout = \"out/run\"\nseed = 3\ndenormalize = true\n",
        ),
        (
            "sweep.toml",
            "schema_version = 1\naxis = \"ema\"\nvalues = [0.2, 0.9]\nseeds = [0, 1]\ntruth = \"out/corpus/truth.csv\"\nembeddings = \"out/corpus/embeddings.pspe\"\nplot = \"svg\"\nout = \"out/sweep\"\n",
        ),
    ];
    for (name, body) in manifests {
        fs::write(d.join(name), body).map_err(|e| e.to_string())?;
    }
    let commands = ["bench", "synth", "simulate", "refine", "sweep"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let _ = fs::remove_dir_all(d.join("out"));
        for (cmd, (manifest, _)) in commands.iter().zip(manifests) {
            psp(d, &[cmd, "--manifest", manifest])?;
        }
        psp(d, &["evaluate", "--scores", "out/run/cleaned.csv", "--scores", "out/noisy.csv", "--truth", "out/corpus/truth.csv", "--out", "out/eval"])?;
        let mut snap = BTreeMap::new();
        snapshot(&d.join("out"), d, &mut snap);
        runs.push(snap);
    }
    let files = runs[0].len();
    if runs[0] == runs[1] {
        Ok(format!("{files} files byte-identical across two runs"))
    } else {
        let differing: Vec<String> = runs[0]
            .iter()
            .filter(|(k, v)| runs[1].get(*k) != Some(v))
            .map(|(k, _)| k.display().to_string())
            .collect();
        Err(format!("differing: {}", differing.join(", ")))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 13] = [
        ("EMA identity", ema_identity, Duration::from_secs(60)),
        ("MLE collapse", mle_collapse, Duration::from_secs(1)),
        ("gradient correctness", gradient_check, Duration::from_secs(10)),
        ("metric oracles", metric_oracles, Duration::from_secs(5)),
        ("NNS oracle", nns_oracle, Duration::from_secs(5)),
        ("antisymmetry and self-residual", antisymmetry, Duration::from_secs(5)),
        ("recovery benchmark", recovery, Duration::from_secs(120)),
        ("EMA ablation ordering", ablation_ordering, Duration::from_secs(600)),
        ("sigma gap growth", sigma_gap, Duration::from_secs(300)),
        ("warm-up insensitivity", warmup_insensitivity, Duration::from_secs(300)),
        ("score-matrix ablation", score_matrix_ablation, Duration::from_secs(300)),
        ("downstream proxy", downstream_proxy, Duration::from_secs(120)),
        ("determinism", determinism, Duration::from_secs(240)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed < *budget => (true, d),
            Ok(d) => (false, format!("{d}; took {elapsed:.2?}, budget {budget:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{elapsed:.2?}]",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
