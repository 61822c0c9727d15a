//! Labelled datasets, synthetic Gaussian blobs and class-balanced batching.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::matrix::{sq_dist, Matrix};
use crate::{Error, Result, Rng};

/// `n x q` inputs with dense labels in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    /// Validates that labels are dense: every class in `0..=max` occurs.
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: inputs.rows(), found: labels.len() });
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = alloc::vec![false; classes];
        labels.iter().for_each(|&y| seen[y] = true);
        if classes == 0 || seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("labels must cover 0..classes densely"));
        }
        Ok(Self { inputs, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    /// Rows at `indices`; fails if a class disappears.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let inputs = self.inputs.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(inputs, labels)
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Per-class shuffled split: `holdout` of every class goes to the
    /// second set (rounded, at least one instance), the rest to the first.
    pub fn stratified_split(&self, holdout: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&holdout) {
            return Err(Error::InvalidArgument("holdout fraction must lie in [0, 1)"));
        }
        let mut keep = Vec::new();
        let mut held = Vec::new();
        for mut idx in self.class_indices() {
            if idx.len() < 2 {
                return Err(Error::InsufficientClassInstances {
                    class: self.labels[idx[0]],
                    have: idx.len(),
                    need: 2,
                });
            }
            idx.shuffle(rng);
            let n_hold = (libm::round(idx.len() as f64 * holdout) as usize).clamp(1, idx.len() - 1);
            held.extend_from_slice(&idx[..n_hold]);
            keep.extend_from_slice(&idx[n_hold..]);
        }
        keep.sort_unstable();
        held.sort_unstable();
        Ok((self.subset(&keep)?, self.subset(&held)?))
    }
}

/// Embedded mini-batch: `b x d` vectors, exactly `per_class` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub vectors: Matrix,
    pub labels: Vec<usize>,
    pub per_class: usize,
}

impl EmbeddingBatch {
    pub fn new(vectors: Matrix, labels: Vec<usize>, per_class: usize, classes: usize) -> Result<Self> {
        check_balanced(&labels, per_class, classes)?;
        if vectors.rows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: vectors.rows() });
        }
        Ok(Self { vectors, labels, per_class })
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

    /// Rows of class `j`, in batch order.
    pub fn class_rows(&self, j: usize) -> Vec<&[f64]> {
        self.labels.iter().enumerate().filter(|(_, &y)| y == j).map(|(i, _)| self.vectors.row(i)).collect()
    }
}

/// `labels` hold exactly `per_class` of each of `classes` classes.
pub fn check_balanced(labels: &[usize], per_class: usize, classes: usize) -> Result<()> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per-class batch size must be positive"));
    }
    if labels.len() != per_class * classes {
        return Err(Error::DimensionMismatch { expected: per_class * classes, found: labels.len() });
    }
    let mut counts = alloc::vec![0usize; classes];
    for &y in labels {
        *counts.get_mut(y).ok_or(Error::InvalidArgument("label out of range"))? += 1;
    }
    if counts.iter().any(|&c| c != per_class) {
        return Err(Error::InvalidArgument("batch is not class balanced"));
    }
    Ok(())
}

/// Class centres on a sphere of radius `6 spread`, pairwise at least
/// `6 spread` apart (rejection sampled; the radius grows if the dimension
/// is too small to fit them).
pub fn blob_centers(classes: usize, q: usize, spread: f64, rng: &mut Rng) -> Result<Matrix> {
    if classes < 2 || q == 0 {
        return Err(Error::InvalidArgument("blobs need at least two classes and q >= 1"));
    }
    let unit = if spread > 0.0 { spread } else { 1.0 };
    let min_sep = 6.0 * unit;
    let mut radius = 6.0 * unit;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let mut failures = 0;
    while centers.len() < classes {
        let mut dir = alloc::vec![0.0; q];
        rng.fill_standard_normal(&mut dir);
        let norm = libm::sqrt(dir.iter().map(|v| v * v).sum());
        if norm == 0.0 {
            continue;
        }
        let c: Vec<f64> = dir.iter().map(|v| v / norm * radius).collect();
        if centers.iter().all(|o| libm::sqrt(sq_dist(o, &c)) >= min_sep) {
            centers.push(c);
        } else {
            failures += 1;
            if failures % 64 == 0 {
                radius *= 1.25;
            }
        }
    }
    Matrix::from_rows(&centers)
}

/// `per_class` draws from `N(center_j, spread^2 I)` for every class,
/// grouped by class.
pub fn sample_blobs(centers: &Matrix, per_class: usize, spread: f64, rng: &mut Rng) -> Result<Dataset> {
    let q = centers.cols();
    let mut data = Vec::with_capacity(centers.rows() * per_class * q);
    let mut labels = Vec::with_capacity(centers.rows() * per_class);
    for (j, c) in centers.iter_rows().enumerate() {
        for _ in 0..per_class {
            for &m in c {
                data.push(m + spread * rng.standard_normal());
            }
            labels.push(j);
        }
    }
    Dataset::new(Matrix::from_vec(labels.len(), q, data)?, labels)
}

/// Well-separated isotropic Gaussian classes in `q` dimensions.
pub fn synth_blobs(classes: usize, per_class: usize, q: usize, spread: f64, rng: &mut Rng) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("blobs need per_class >= 1"));
    }
    let centers = blob_centers(classes, q, spread, rng)?;
    sample_blobs(&centers, per_class, spread, rng)
}

/// One epoch of class-balanced index batches.
///
/// Each class is shuffled, then batch `t` takes positions
/// `t*n'..(t+1)*n'` of every class (grouped by ascending class id). The
/// epoch ends when the smallest class runs out; leftovers are dropped.
pub fn balanced_batches(ds: &Dataset, per_class: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per-class batch size must be positive"));
    }
    let mut by_class = ds.class_indices();
    for (j, idx) in by_class.iter().enumerate() {
        if idx.len() < per_class {
            return Err(Error::InsufficientClassInstances { class: j, have: idx.len(), need: per_class });
        }
    }
    by_class.iter_mut().for_each(|idx| idx.shuffle(rng));
    let n_batches = by_class.iter().map(|idx| idx.len() / per_class).min().unwrap_or(0);
    Ok((0..n_batches)
        .map(|t| {
            by_class.iter().flat_map(|idx| idx[t * per_class..(t + 1) * per_class].iter().copied()).collect()
        })
        .collect())
}
