//! Recall@k and exhaustive nearest-neighbour retrieval.
//!
//! Neighbours are ordered by Euclidean distance with ties broken by
//! ascending index. A query never counts itself as a neighbour for recall.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::matrix::{sq_dist, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSet {
    vectors: Matrix,
    labels: Vec<usize>,
}

impl EmbeddedSet {
    pub fn new(vectors: Matrix, labels: Vec<usize>) -> Result<Self> {
        if vectors.rows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: vectors.rows() });
        }
        if labels.len() < 2 {
            return Err(Error::InvalidArgument("an embedded set needs at least two points"));
        }
        if !vectors.is_finite() {
            return Err(Error::NonFinite("embedded vectors"));
        }
        Ok(Self { vectors, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// Euclidean distance to the query.
    pub distance: f64,
}

#[inline]
fn before(da: f64, ia: usize, db: f64, ib: usize) -> bool {
    match da.total_cmp(&db) {
        Ordering::Less => true,
        Ordering::Equal => ia < ib,
        Ordering::Greater => false,
    }
}

/// Zero-based rank, among all other points, of the nearest point sharing
/// the label of point `q`; `None` if `q` is alone in its class.
fn first_match_rank(set: &EmbeddedSet, q: usize) -> Option<usize> {
    let x = set.vectors.row(q);
    let y = set.labels[q];
    let dist: Vec<f64> = set.vectors.iter_rows().map(|r| sq_dist(x, r)).collect();
    let mut best: Option<(f64, usize)> = None;
    for (j, &dj) in dist.iter().enumerate() {
        if j != q && set.labels[j] == y && best.map_or(true, |(db, ib)| before(dj, j, db, ib)) {
            best = Some((dj, j));
        }
    }
    let (db, ib) = best?;
    Some(dist.iter().enumerate().filter(|&(j, &dj)| j != q && before(dj, j, db, ib)).count())
}

/// Recall@k for every requested `k`, in the order given.
pub fn recall_at_k(set: &EmbeddedSet, ks: &[usize]) -> Result<Vec<(usize, f64)>> {
    let m = set.len();
    for &k in ks {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be positive"));
        }
        if k >= m {
            return Err(Error::KTooLarge { k, m });
        }
    }
    let ranks: Vec<Option<usize>> = (0..m).map(|q| first_match_rank(set, q)).collect();
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r < k)).count();
            (k, hits as f64 / m as f64)
        })
        .collect())
}

/// The `k` database points nearest to `query`, nearest first.
pub fn retrieve_topk(set: &EmbeddedSet, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
    if query.len() != set.dim() {
        return Err(Error::DimensionMismatch { expected: set.dim(), found: query.len() });
    }
    if k > set.len() {
        return Err(Error::KTooLarge { k, m: set.len() });
    }
    let mut all: Vec<(f64, usize)> = set.vectors.iter_rows().map(|r| sq_dist(query, r)).zip(0..).collect();
    all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(all.into_iter().take(k).map(|(d, index)| Neighbor { index, distance: libm::sqrt(d) }).collect())
}
