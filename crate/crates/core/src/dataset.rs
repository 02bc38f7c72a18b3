//! Domain types: items, datasets, score normalization and the score matrix.

use std::collections::HashMap;

use crate::features::EmbeddingTable;
use crate::scalar::{l2_norm, normalize_in_place, Scalar};
use crate::{Error, Result};

/// Permitted deviation of an embedding norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Affine map `x -> (x - min) / (max - min)` applied to raw scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreMap<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> ScoreMap<T> {
    pub fn identity() -> Self {
        Self {
            min: T::zero(),
            max: T::one(),
        }
    }

    /// Fits the map to the range of `values`. Constant input maps to
    /// `(v, v + 1)` and is later mapped onto 0.5 by [`normalize_scores`].
    pub fn fit(values: &[T]) -> Result<Self> {
        let (mut lo, mut hi) = match values.first() {
            Some(&v) => (v, v),
            None => return Err(Error::InsufficientData("no scores to normalize".into())),
        };
        for &v in values {
            if !v.is_finite() {
                return Err(Error::MalformedDataset(format!("non-finite score {v}")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi == lo {
            hi = lo + T::one();
        }
        Ok(Self { min: lo, max: hi })
    }

    pub fn apply(&self, x: T) -> T {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, x: T) -> T {
        self.min + x * (self.max - self.min)
    }
}

/// Min-max normalization of a score list onto `[0, 1]`.
///
/// A constant list maps to all 0.5 with the recorded map `(v, v + 1)`.
pub fn normalize_scores<T: Scalar>(raw: &[T]) -> Result<(Vec<T>, ScoreMap<T>)> {
    let map = ScoreMap::fit(raw)?;
    let degenerate = raw.iter().all(|&x| x == raw[0]);
    let out = if degenerate {
        vec![T::lit(0.5); raw.len()]
    } else {
        raw.iter().map(|&x| map.apply(x)).collect()
    };
    Ok((out, map))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Opinion<T> {
    pub annotator: String,
    pub score: T,
}

impl<T> Opinion<T> {
    pub fn new(annotator: impl Into<String>, score: T) -> Self {
        Self {
            annotator: annotator.into(),
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item<T> {
    pub id: String,
    pub embedding: Vec<T>,
    pub raw_scores: Vec<Opinion<T>>,
    pub true_mos: Option<T>,
}

impl<T: Scalar> Item<T> {
    /// Arithmetic mean of the raw opinions, summed in sorted order so the
    /// result does not depend on annotator order.
    pub fn mean_score(&self) -> Result<T> {
        if self.raw_scores.is_empty() {
            return Err(Error::MalformedDataset(format!(
                "item `{}` has no scores",
                self.id
            )));
        }
        let mut xs: Vec<T> = self.raw_scores.iter().map(|o| o.score).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        let n = T::from_usize(xs.len()).expect("count fits scalar");
        Ok(xs.into_iter().sum::<T>() / n)
    }
}

/// One row of a scores table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord<T> {
    pub item_id: String,
    pub annotator_id: String,
    pub score: T,
}

/// Validated, immutable collection of items sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    items: Vec<Item<T>>,
    dim: usize,
    normalization: ScoreMap<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(items: Vec<Item<T>>, normalization: ScoreMap<T>) -> Result<Self> {
        let dim = items.first().map(|it| it.embedding.len()).unwrap_or(0);
        let mut seen = HashMap::with_capacity(items.len());
        let tol = T::lit(UNIT_NORM_TOL);
        for (i, item) in items.iter().enumerate() {
            if seen.insert(item.id.as_str(), i).is_some() {
                return Err(Error::DuplicateId(item.id.clone()));
            }
            if item.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: item.embedding.len(),
                });
            }
            let norm = l2_norm(&item.embedding);
            if !((norm - T::one()).abs() <= tol) {
                return Err(Error::MalformedDataset(format!(
                    "embedding of `{}` has norm {norm}",
                    item.id
                )));
            }
            if item.raw_scores.is_empty() {
                return Err(Error::MalformedDataset(format!(
                    "item `{}` has no scores",
                    item.id
                )));
            }
            let in_unit = |x: T| x >= T::zero() && x <= T::one();
            if let Some(o) = item.raw_scores.iter().find(|o| !in_unit(o.score)) {
                return Err(Error::MalformedDataset(format!(
                    "score {} of `{}` outside [0,1]",
                    o.score, item.id
                )));
            }
            if let Some(t) = item.true_mos.filter(|&t| !in_unit(t)) {
                return Err(Error::MalformedDataset(format!(
                    "true score {t} of `{}` outside [0,1]",
                    item.id
                )));
            }
        }
        Ok(Self {
            items,
            dim,
            normalization,
        })
    }

    /// Builds a dataset from raw score rows and an embedding table.
    ///
    /// Items appear in first-occurrence order of `records`. Scores (and the
    /// truth values, when given) are min-max normalized with one shared map.
    /// Truth entries for items that have no scores are ignored.
    pub fn assemble(
        records: &[ScoreRecord<T>],
        embeddings: &EmbeddingTable<T>,
        truth: Option<&[(String, T)]>,
    ) -> Result<Self> {
        let mut order: Vec<&str> = Vec::new();
        let mut grouped: HashMap<&str, Vec<Opinion<T>>> = HashMap::new();
        for r in records {
            let entry = grouped.entry(r.item_id.as_str()).or_insert_with(|| {
                order.push(r.item_id.as_str());
                Vec::new()
            });
            entry.push(Opinion::new(r.annotator_id.clone(), r.score));
        }
        if order.is_empty() {
            return Err(Error::InsufficientData("no score rows".into()));
        }

        let mut truth_map: HashMap<&str, T> = HashMap::new();
        if let Some(rows) = truth {
            for (id, v) in rows {
                if truth_map.insert(id.as_str(), *v).is_some() {
                    return Err(Error::DuplicateId(id.clone()));
                }
            }
        }

        let mut all: Vec<T> = records.iter().map(|r| r.score).collect();
        all.extend(
            order
                .iter()
                .filter_map(|id| truth_map.get(id).copied()),
        );
        let map = ScoreMap::fit(&all)?;
        let constant = all.iter().all(|&x| x == all[0]);
        let norm = |x: T| if constant { T::lit(0.5) } else { map.apply(x) };

        let mut items = Vec::with_capacity(order.len());
        for id in order {
            let mut embedding = embeddings
                .get(id)
                .ok_or_else(|| Error::MissingEmbedding(id.to_string()))?
                .to_vec();
            if !normalize_in_place(&mut embedding, T::lit(1e-12)) {
                return Err(Error::ZeroNorm(id.to_string()));
            }
            let raw_scores = grouped
                .remove(id)
                .expect("grouped by id")
                .into_iter()
                .map(|o| Opinion::new(o.annotator, norm(o.score)))
                .collect();
            items.push(Item {
                id: id.to_string(),
                embedding,
                raw_scores,
                true_mos: truth_map.get(id).map(|&t| norm(t)),
            });
        }
        Self::new(items, map)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn items(&self) -> &[Item<T>] {
        &self.items
    }

    pub fn item(&self, n: usize) -> &Item<T> {
        &self.items[n]
    }

    pub fn embedding(&self, n: usize) -> &[T] {
        &self.items[n].embedding
    }

    pub fn normalization(&self) -> ScoreMap<T> {
        self.normalization
    }

    pub fn into_items(self) -> Vec<Item<T>> {
        self.items
    }

    /// Position of `id` in item order.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    /// Truth scores in item order, if every item carries one.
    pub fn true_scores(&self) -> Option<Vec<T>> {
        self.items.iter().map(|it| it.true_mos).collect()
    }
}

/// Per-item estimated true score `u(x_n)`, indexed like `Dataset::items`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> ScoreMatrix<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, n: usize) -> T {
        self.values[n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }
}

/// Initial score matrix: the per-item mean of raw scores.
pub fn init_score_matrix<T: Scalar>(dataset: &Dataset<T>) -> Result<ScoreMatrix<T>> {
    let values = dataset
        .items()
        .iter()
        .map(Item::mean_score)
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreMatrix { values })
}
