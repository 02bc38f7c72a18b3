//! Exact 1-nearest-neighbour dictionary under normalized dot product.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::io::csv::NeighborRow;
use crate::scalar::{dot, Scalar};
use crate::{Error, Result};

/// Rows of candidates scanned per block.
const BLOCK: usize = 256;

/// `neighbor[n]` is the most similar other item to `n`; `similarity[n]` is the
/// winning dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborDictionary<T> {
    neighbor: Vec<usize>,
    similarity: Vec<T>,
}

impl<T: Scalar> NeighborDictionary<T> {
    pub fn len(&self) -> usize {
        self.neighbor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor.is_empty()
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbor
    }

    pub fn similarities(&self) -> &[T] {
        &self.similarity
    }

    /// Stored `(reference index, similarity)` for item `n`.
    pub fn query(&self, n: usize) -> Result<(usize, T)> {
        match self.neighbor.get(n) {
            Some(&m) => Ok((m, self.similarity[n])),
            None => Err(Error::OutOfRange {
                index: n,
                len: self.len(),
            }),
        }
    }

    /// Rebuilds a dictionary from cache rows, checking that every item of
    /// `dataset` appears exactly once, neighbours exist and differ from the
    /// item, and similarities agree with the embeddings.
    pub fn from_cache(dataset: &Dataset<T>, rows: &[NeighborRow<T>]) -> Result<Self> {
        let n = dataset.len();
        let lookup: std::collections::HashMap<&str, usize> = dataset
            .items()
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id.as_str(), i))
            .collect();
        let mut neighbor = vec![usize::MAX; n];
        let mut similarity = vec![T::zero(); n];
        for r in rows {
            let i = *lookup
                .get(r.item_id.as_str())
                .ok_or_else(|| Error::InvalidCache(format!("unknown item `{}`", r.item_id)))?;
            let j = *lookup.get(r.neighbor_id.as_str()).ok_or_else(|| {
                Error::InvalidCache(format!("unknown neighbor `{}`", r.neighbor_id))
            })?;
            if i == j {
                return Err(Error::InvalidCache(format!("`{}` is its own neighbor", r.item_id)));
            }
            if neighbor[i] != usize::MAX {
                return Err(Error::InvalidCache(format!("`{}` listed twice", r.item_id)));
            }
            let actual = dot(dataset.embedding(i), dataset.embedding(j));
            if (actual - r.similarity).abs() > T::lit(1e-6) {
                return Err(Error::InvalidCache(format!(
                    "similarity for `{}` is stale ({} cached, {} actual)",
                    r.item_id, r.similarity, actual
                )));
            }
            neighbor[i] = j;
            similarity[i] = actual;
        }
        if let Some(i) = neighbor.iter().position(|&m| m == usize::MAX) {
            return Err(Error::InvalidCache(format!(
                "no entry for `{}`",
                dataset.item(i).id
            )));
        }
        Ok(Self {
            neighbor,
            similarity,
        })
    }

    pub fn to_cache(&self, dataset: &Dataset<T>) -> Vec<NeighborRow<T>> {
        self.neighbor
            .iter()
            .zip(&self.similarity)
            .enumerate()
            .map(|(i, (&j, &s))| NeighborRow {
                item_id: dataset.item(i).id.clone(),
                neighbor_id: dataset.item(j).id.clone(),
                similarity: s,
            })
            .collect()
    }
}

/// Brute-force search over all pairs; ties go to the smallest index.
pub fn build_index<T: Scalar>(dataset: &Dataset<T>) -> Result<NeighborDictionary<T>> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "nearest-neighbour search needs at least 2 items, got {n}"
        )));
    }
    let best: Vec<(usize, T)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q = dataset.embedding(i);
            let mut arg = usize::MAX;
            let mut top = T::neg_infinity();
            for start in (0..n).step_by(BLOCK) {
                for j in start..(start + BLOCK).min(n) {
                    if j == i {
                        continue;
                    }
                    let s = dot(q, dataset.embedding(j));
                    if s > top || arg == usize::MAX {
                        top = s;
                        arg = j;
                    }
                }
            }
            (arg, top)
        })
        .collect();
    let (neighbor, similarity) = best.into_iter().unzip();
    Ok(NeighborDictionary {
        neighbor,
        similarity,
    })
}
