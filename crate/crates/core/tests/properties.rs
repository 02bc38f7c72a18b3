use proptest::prelude::*;
use psp_core::dataset::{Dataset, Item, Opinion, ScoreMap, ScoreRecord};
use psp_core::io::csv::{
    read_neighbor_cache, read_predictions, read_scores, read_truth, write_cleaned, write_neighbor_cache,
    write_scores, write_truth, CleanedRow, NeighborRow,
};
use psp_core::nnindex::build_index;
use psp_core::simulate::{simulate, NoiseMode, SimulationConfig};

fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-3).then(|| v.into_iter().map(|x| x / n).collect())
}

fn dataset(vectors: Vec<Vec<f64>>) -> Option<Dataset<f64>> {
    let items = vectors
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            Some(Item {
                id: format!("x{i}"),
                embedding: unit(v)?,
                raw_scores: vec![Opinion::new("a", (i % 10) as f64 / 10.0)],
                true_mos: Some(((i * 7) % 10) as f64 / 10.0),
            })
        })
        .collect::<Option<Vec<_>>>()?;
    Dataset::new(items, ScoreMap::identity()).ok()
}

fn vectors(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
}

/// Ids that survive the readers' whitespace trimming, including characters
/// that need CSV quoting.
fn id() -> impl Strategy<Value = String> {
    "[a-z0-9][a-z0-9 ,\"_-]{0,6}[a-z0-9]"
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, 0.0f64..1.0, Just(0.0), Just(1.0), Just(1e-300)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn neighbours_follow_a_permutation(vs in vectors(2..40, 4), perm_seed in any::<u64>()) {
        let Some(ds) = dataset(vs) else { return Ok(()) };
        let n = ds.len();
        let mut order: Vec<usize> = (0..n).collect();
        psp_core::Rng::new(perm_seed).shuffle(&mut order);
        let shuffled = Dataset::new(order.iter().map(|&i| ds.item(i).clone()).collect(), ScoreMap::identity()).unwrap();
        let (a, b) = (build_index(&ds).unwrap(), build_index(&shuffled).unwrap());
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(&ds.item(a.neighbors()[i]).id, &shuffled.item(b.neighbors()[k]).id);
            prop_assert_ne!(a.neighbors()[i], i);
        }
    }

    #[test]
    fn a_closer_vector_takes_over(vs in vectors(3..30, 5), pick in any::<prop::sample::Index>(), other in any::<prop::sample::Index>()) {
        let Some(ds) = dataset(vs) else { return Ok(()) };
        let n = pick.index(ds.len());
        let dict = build_index(&ds).unwrap();
        let (_, best) = dict.query(n).unwrap();
        prop_assume!(best < 0.99);
        let m = (n + 1 + other.index(ds.len() - 1)) % ds.len();
        let mut items = ds.into_items();
        let target = items[n].embedding.clone();
        let nudge: Vec<f64> = target.iter().enumerate().map(|(j, t)| t + if j == 0 { 0.01 } else { 0.0 }).collect();
        items[m].embedding = unit(nudge).unwrap();
        let moved = Dataset::new(items, ScoreMap::identity()).unwrap();
        prop_assert_eq!(build_index(&moved).unwrap().neighbors()[n], m);
    }

    #[test]
    fn simulation_keeps_truth_and_range(vs in vectors(1..40, 3), sigma in 0.0f64..1.0, rate in 0.0f64..=1.0, seed in any::<u64>(), subsample in any::<bool>()) {
        let Some(ds) = dataset(vs) else { return Ok(()) };
        let mode = if subsample { NoiseMode::Subsample } else { NoiseMode::Gaussian };
        let cfg = SimulationConfig { sigma, noise_rate: rate, mode, seed };
        let out = simulate(&ds, &cfg).unwrap();
        prop_assert_eq!(&out, &simulate(&ds, &cfg).unwrap());
        for (a, b) in ds.items().iter().zip(out.items()) {
            prop_assert_eq!(a.true_mos, b.true_mos);
            prop_assert!(b.raw_scores.iter().all(|o| (0.0..=1.0).contains(&o.score)));
        }
    }

    #[test]
    fn score_and_truth_tables_round_trip(rows in prop::collection::vec((id(), id(), value()), 1..20)) {
        let records: Vec<ScoreRecord<f64>> = rows
            .iter()
            .map(|(i, a, s)| ScoreRecord { item_id: i.clone(), annotator_id: a.clone(), score: *s })
            .collect();
        let mut buf = Vec::new();
        write_scores(&mut buf, &records).unwrap();
        prop_assert_eq!(read_scores::<f64, _>(buf.as_slice()).unwrap(), records);

        let truth: Vec<(String, f64)> = rows.iter().map(|(i, _, s)| (i.clone(), *s)).collect();
        let mut buf = Vec::new();
        write_truth(&mut buf, &truth).unwrap();
        prop_assert_eq!(read_truth::<f64, _>(buf.as_slice()).unwrap(), truth);
    }

    #[test]
    fn cache_and_cleaned_tables_round_trip(rows in prop::collection::vec((id(), id(), value(), value()), 1..20)) {
        let cache: Vec<NeighborRow<f64>> = rows
            .iter()
            .map(|(i, j, s, _)| NeighborRow { item_id: i.clone(), neighbor_id: j.clone(), similarity: *s })
            .collect();
        let mut buf = Vec::new();
        write_neighbor_cache(&mut buf, &cache).unwrap();
        prop_assert_eq!(read_neighbor_cache::<f64, _>(buf.as_slice()).unwrap(), cache);

        let mut seen = std::collections::HashSet::new();
        let cleaned: Vec<CleanedRow<f64>> = rows
            .iter()
            .filter(|(i, ..)| seen.insert(i.clone()))
            .map(|(i, _, a, b)| CleanedRow { item_id: i.clone(), score_raw: *a, score_clean: *b, denorm: None })
            .collect();
        let mut buf = Vec::new();
        write_cleaned(&mut buf, &cleaned).unwrap();
        let back = read_predictions::<f64, _>(buf.as_slice(), None).unwrap();
        let want: Vec<(String, f64)> = cleaned.iter().map(|r| (r.item_id.clone(), r.score_clean)).collect();
        prop_assert_eq!(back, want);
    }
}
