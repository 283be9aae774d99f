//! Feature/prediction memory bank with cosine-similarity KNN retrieval.
//!
//! In [`BankMode::Full`] the bank has one slot per target sample and slot
//! index equals sample id. In [`BankMode::Ring`] it keeps only the most
//! recent `capacity` rows written, overwriting the oldest first.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_simplex, dot, norm, DenseMatrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BankMode {
    Full,
    Ring,
}

#[derive(Clone, Debug)]
pub struct MemoryBank<T> {
    mode: BankMode,
    features: DenseMatrix<T>,
    predictions: DenseMatrix<T>,
    /// `None` marks an empty slot.
    sample_ids: Vec<Option<usize>>,
    cursor: usize,
    filled: usize,
}

/// Result of a KNN query. Predictions are copies taken at query time.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbors<T> {
    pub ids: Vec<usize>,
    pub slots: Vec<usize>,
    pub similarities: Vec<T>,
    /// K × C
    pub predictions: DenseMatrix<T>,
}

/// Index sets around one anchor: its close neighbors `𝒞` (from the bank)
/// and the background `ℬ` (the rest of its mini-batch).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborSet {
    pub anchor: usize,
    pub close: Vec<usize>,
    pub background: Vec<usize>,
}

impl NeighborSet {
    pub fn new(anchor: usize, close: Vec<usize>, background: Vec<usize>) -> Result<Self> {
        if close.contains(&anchor) {
            return Err(Error::Precondition(format!("anchor {anchor} is in its close set")));
        }
        if background.contains(&anchor) {
            return Err(Error::Precondition(format!(
                "anchor {anchor} is in its background set"
            )));
        }
        if close.len() >= background.len() {
            return Err(Error::Precondition(format!(
                "need |close| < |background|, got {} and {}",
                close.len(),
                background.len()
            )));
        }
        Ok(Self {
            anchor,
            close,
            background,
        })
    }

    /// Close set from retrieved ids; background is every other id of the batch.
    pub fn for_batch(batch_ids: &[usize], position: usize, close: Vec<usize>) -> Result<Self> {
        let anchor = batch_ids[position];
        let background = batch_ids
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != position)
            .map(|(_, &id)| id)
            .collect();
        Self::new(anchor, close, background)
    }
}

impl<T: Real> MemoryBank<T> {
    pub fn new(mode: BankMode, capacity: usize, feature_dim: usize, classes: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("bank capacity must be ≥ 1".into()));
        }
        if feature_dim == 0 || classes == 0 {
            return Err(Error::Config("feature and class dimensions must be ≥ 1".into()));
        }
        Ok(Self {
            mode,
            features: DenseMatrix::zeros(capacity, feature_dim),
            predictions: DenseMatrix::zeros(capacity, classes),
            sample_ids: vec![None; capacity],
            cursor: 0,
            filled: 0,
        })
    }

    pub fn mode(&self) -> BankMode {
        self.mode
    }

    pub fn capacity(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    /// Next slot a ring-mode write goes to.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn features(&self) -> &DenseMatrix<T> {
        &self.features
    }

    pub fn predictions(&self) -> &DenseMatrix<T> {
        &self.predictions
    }

    pub fn slot_id(&self, slot: usize) -> Option<usize> {
        self.sample_ids[slot]
    }

    /// `(slot, sample id)` for every occupied slot, in slot order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sample_ids
            .iter()
            .enumerate()
            .filter_map(|(s, id)| id.map(|id| (s, id)))
    }

    /// Sample ids currently held, sorted.
    pub fn retained_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.occupied().map(|(_, id)| id).collect();
        ids.sort_unstable();
        ids
    }

    /// Writes one row per sample id.
    pub fn update(
        &mut self,
        sample_ids: &[usize],
        features: &DenseMatrix<T>,
        predictions: &DenseMatrix<T>,
    ) -> Result<()> {
        let n = sample_ids.len();
        if features.rows() != n || predictions.rows() != n {
            return Err(Error::Shape(format!(
                "{n} ids, {} feature rows, {} prediction rows",
                features.rows(),
                predictions.rows()
            )));
        }
        if features.cols() != self.features.cols() || predictions.cols() != self.predictions.cols()
        {
            return Err(Error::Shape(format!(
                "bank stores {}-d features and {} classes, got {} and {}",
                self.features.cols(),
                self.predictions.cols(),
                features.cols(),
                predictions.cols()
            )));
        }
        for (r, row) in predictions.row_iter().enumerate() {
            check_simplex(row)
                .map_err(|e| Error::InvalidInput(format!("prediction for id {}: {e}", sample_ids[r])))?;
        }
        if !features.is_finite() {
            return Err(Error::InvalidInput("non-finite feature row".into()));
        }
        if self.mode == BankMode::Full {
            if let Some(&bad) = sample_ids.iter().find(|&&id| id >= self.capacity()) {
                return Err(Error::Index(format!(
                    "sample id {bad} in a full bank of {} slots",
                    self.capacity()
                )));
            }
        }
        for (r, &id) in sample_ids.iter().enumerate() {
            let slot = match self.mode {
                BankMode::Full => id,
                BankMode::Ring => {
                    let s = self.cursor;
                    self.cursor = (self.cursor + 1) % self.capacity();
                    s
                }
            };
            if self.sample_ids[slot].is_none() {
                self.filled += 1;
            }
            self.sample_ids[slot] = Some(id);
            self.features.row_mut(slot).copy_from_slice(features.row(r));
            self.predictions.row_mut(slot).copy_from_slice(predictions.row(r));
        }
        Ok(())
    }

    /// The `k` stored rows most cosine-similar to `query`, skipping every
    /// slot holding `exclude_id`. Ties go to the lower sample id. Zero-norm
    /// stored features are never returned; a zero query scores every
    /// candidate 0.
    pub fn knn(&self, query: &[T], k: usize, exclude_id: Option<usize>) -> Result<Neighbors<T>> {
        let norms = self.feature_norms();
        self.knn_with_norms(query, k, exclude_id, &norms)
    }

    /// [`knn`](Self::knn) for every row of `queries`, excluding the matching id.
    pub fn knn_batch(
        &self,
        queries: &DenseMatrix<T>,
        k: usize,
        exclude_ids: &[usize],
    ) -> Result<Vec<Neighbors<T>>> {
        if queries.rows() != exclude_ids.len() {
            return Err(Error::Shape(format!(
                "{} queries, {} exclusion ids",
                queries.rows(),
                exclude_ids.len()
            )));
        }
        let norms = self.feature_norms();
        queries
            .row_iter()
            .zip(exclude_ids)
            .map(|(q, &id)| self.knn_with_norms(q, k, Some(id), &norms))
            .collect()
    }

    fn feature_norms(&self) -> Vec<T> {
        self.features.row_iter().map(norm).collect()
    }

    fn knn_with_norms(
        &self,
        query: &[T],
        k: usize,
        exclude_id: Option<usize>,
        norms: &[T],
    ) -> Result<Neighbors<T>> {
        if k == 0 {
            return Err(Error::Config("K must be ≥ 1".into()));
        }
        if query.len() != self.features.cols() {
            return Err(Error::Shape(format!(
                "query has {} dims, bank stores {}",
                query.len(),
                self.features.cols()
            )));
        }
        if self.filled <= k {
            return Err(Error::InsufficientData(format!(
                "bank holds {} rows, need more than K = {k}",
                self.filled
            )));
        }
        let qn = norm(query);
        let mut candidates: Vec<(T, usize, usize)> = self
            .occupied()
            .filter(|&(s, id)| Some(id) != exclude_id && norms[s] > T::zero())
            .map(|(s, id)| {
                let sim = if qn > T::zero() {
                    dot(query, self.features.row(s)) / (qn * norms[s])
                } else {
                    T::zero()
                };
                (sim, id, s)
            })
            .collect();
        if candidates.len() < k {
            return Err(Error::InsufficientData(format!(
                "only {} eligible rows for K = {k}",
                candidates.len()
            )));
        }
        let order = |a: &(T, usize, usize), b: &(T, usize, usize)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        };
        if candidates.len() > k {
            candidates.select_nth_unstable_by(k - 1, order);
            candidates.truncate(k);
        }
        candidates.sort_by(order);
        let slots: Vec<usize> = candidates.iter().map(|c| c.2).collect();
        Ok(Neighbors {
            ids: candidates.iter().map(|c| c.1).collect(),
            similarities: candidates.iter().map(|c| c.0).collect(),
            predictions: self.predictions.select_rows(&slots)?,
            slots,
        })
    }

    /// CSV dump: `id,f0..f{h-1},p0..p{C-1}`, one line per occupied slot.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let h = self.features.cols();
        let c = self.predictions.cols();
        let mut header = vec!["id".to_string()];
        header.extend((0..h).map(|i| format!("f{i}")));
        header.extend((0..c).map(|i| format!("p{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (slot, id) in self.occupied() {
            let mut line = id.to_string();
            for v in self.features.row(slot).iter().chain(self.predictions.row(slot)) {
                line.push(',');
                line.push_str(&format!("{:.16e}", v.as_f64()));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}
