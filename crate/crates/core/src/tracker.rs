//! Streaming per-class Gaussian estimates refreshed with the
//! normal-inverse-Wishart conjugate update.
//!
//! Each class carries its running mean, the total scatter matrix of every
//! embedding consumed so far and the count `n0`. On a new batch slice with
//! sample mean `mu'`, MLE covariance `Sigma'` and size `n'`:
//!
//! ```text
//! eta     = (n' mu' + n0 mu0) / (n' + n0)
//! Upsilon = n' Sigma' + n0 Sigma0 + n' n0 / (n' + n0) (mu0 - mu')(mu0 - mu')^T
//! ```
//!
//! where `n0 Sigma0` is the carried scatter, so `Upsilon` is exactly the
//! pooled scatter of all data seen. The covariance handed to the sampler is
//! the inverse-Wishart posterior mean `Upsilon / (n' + n0 - d - 1)` once
//! `n' + n0 > d + 1`, and the batch MLE covariance before that.

use alloc::vec::Vec;

use crate::distributions::{GaussianParams, InvWishartParams, MvtParams};
use crate::matrix::{cholesky, regularize_psd, SymMatrix};
use crate::{Error, Result};

/// How the posterior covariance is turned into the sampling covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovMode {
    /// `Upsilon / (n' + n0 - d - 1)`, the inverse-Wishart posterior mean.
    #[default]
    Standard,
    /// `Upsilon^-1 / (n' + n0 - d - 1)`, the update exactly as it is
    /// usually printed. Shrinks with more data and has inverted units;
    /// kept for fidelity experiments.
    PaperLiteral,
}

/// Which rule produced the current `cov0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateBranch {
    /// First batch: sample mean and MLE covariance.
    Initial,
    /// `n' + n0 > d + 1`: conjugate posterior mean.
    Bayesian,
    /// `n' + n0 <= d + 1`: batch MLE covariance.
    MleFallback,
}

/// The embeddings of one class within a mini-batch.
#[derive(Debug, Clone)]
pub struct BatchSlice<'a> {
    pub class_id: usize,
    pub vectors: Vec<&'a [f64]>,
}

impl<'a> BatchSlice<'a> {
    pub fn new(class_id: usize, vectors: Vec<&'a [f64]>) -> Result<Self> {
        let d = vectors.first().ok_or(Error::EmptySlice)?.len();
        if d == 0 {
            return Err(Error::InvalidArgument("embedding vectors must be non-empty"));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: v.len() });
        }
        Ok(Self { class_id, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn stats(&self) -> Result<SliceStats> {
        SliceStats::from_vectors(&self.vectors)
    }
}

/// Sample mean, scatter `sum (x - mean)(x - mean)^T` and size of a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStats {
    pub mean: Vec<f64>,
    pub scatter: SymMatrix,
    pub count: usize,
}

impl SliceStats {
    pub fn from_vectors<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::EmptySlice)?.as_ref();
        let d = first.len();
        let n = vectors.len() as f64;
        let mut mean = alloc::vec![0.0; d];
        for v in vectors {
            let v = v.as_ref();
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut scatter = SymMatrix::zeros(d);
        let mut r = alloc::vec![0.0; d];
        for v in vectors {
            r.iter_mut().zip(v.as_ref()).zip(&mean).for_each(|((r, x), m)| *r = x - m);
            scatter.add_outer(1.0, &r)?;
        }
        Ok(Self { mean, scatter, count: vectors.len() })
    }

    /// MLE covariance (divisor `count`).
    pub fn cov(&self) -> SymMatrix {
        self.scatter.scaled(1.0 / self.count as f64)
    }
}

/// Streaming estimate for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassState {
    pub class_id: usize,
    /// Running mean.
    pub mean0: Vec<f64>,
    /// Covariance used for sampling.
    pub cov0: SymMatrix,
    /// Number of embeddings consumed.
    pub n0: usize,
    scatter: SymMatrix,
    last_branch: UpdateBranch,
}

impl ClassState {
    /// Reassembles a state, e.g. from a checkpoint.
    pub fn from_parts(
        class_id: usize,
        mean0: Vec<f64>,
        cov0: SymMatrix,
        scatter: SymMatrix,
        n0: usize,
    ) -> Result<Self> {
        let d = mean0.len();
        for m in [&cov0, &scatter] {
            if m.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: m.dim() });
            }
        }
        if n0 == 0 {
            return Err(Error::InvalidArgument("class state needs n0 >= 1"));
        }
        let last_branch = UpdateBranch::Initial;
        Ok(Self { class_id, mean0, cov0, n0, scatter, last_branch })
    }

    pub fn dim(&self) -> usize {
        self.mean0.len()
    }

    /// Total scatter of every embedding consumed. Right after a conjugate
    /// update this is the `Upsilon` of that update.
    pub fn scatter(&self) -> &SymMatrix {
        &self.scatter
    }

    pub fn last_branch(&self) -> UpdateBranch {
        self.last_branch
    }

    /// The sampling distribution, with `cov0` jittered when `eps_scale` is
    /// given.
    pub fn gaussian(&self, eps_scale: Option<f64>) -> GaussianParams {
        let cov = match eps_scale {
            Some(eps) => regularize_psd(&self.cov0, eps),
            None => self.cov0.clone(),
        };
        GaussianParams { mean: self.mean0.clone(), cov }
    }
}

/// State after the first batch of a class: sample mean and MLE covariance.
pub fn init_mle(slice: &BatchSlice<'_>) -> Result<ClassState> {
    let stats = slice.stats()?;
    Ok(ClassState {
        class_id: slice.class_id,
        cov0: stats.cov(),
        mean0: stats.mean,
        n0: stats.count,
        scatter: stats.scatter,
        last_branch: UpdateBranch::Initial,
    })
}

/// `(eta, Upsilon)` for a prior state and the statistics of a new slice.
fn pooled(state: &ClassState, stats: &SliceStats) -> Result<(Vec<f64>, SymMatrix)> {
    let d = state.dim();
    if stats.mean.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: stats.mean.len() });
    }
    let n_new = stats.count as f64;
    let n_old = state.n0 as f64;
    let total = n_new + n_old;
    let eta: Vec<f64> =
        stats.mean.iter().zip(&state.mean0).map(|(m1, m0)| (n_new * m1 + n_old * m0) / total).collect();
    let delta: Vec<f64> = state.mean0.iter().zip(&stats.mean).map(|(m0, m1)| m0 - m1).collect();
    let mut upsilon = stats.scatter.clone();
    upsilon.add_assign(&state.scatter)?;
    upsilon.add_outer(n_new * n_old / total, &delta)?;
    Ok((eta, upsilon))
}

/// Folds a new batch slice into a class state.
pub fn bayes_update(state: &ClassState, slice: &BatchSlice<'_>, mode: CovMode) -> Result<ClassState> {
    if state.n0 == 0 {
        return Err(Error::InvalidArgument("bayes_update needs a state with n0 >= 1"));
    }
    let stats = slice.stats()?;
    let (eta, upsilon) = pooled(state, &stats)?;
    let d = state.dim();
    let n_total = state.n0 + stats.count;
    let (cov0, branch) = if n_total > d + 1 {
        let denom = (n_total - d - 1) as f64;
        let cov = match mode {
            CovMode::Standard => upsilon.scaled(1.0 / denom),
            CovMode::PaperLiteral => cholesky(&upsilon)?.inverse().scaled(1.0 / denom),
        };
        (cov, UpdateBranch::Bayesian)
    } else {
        (stats.cov(), UpdateBranch::MleFallback)
    };
    Ok(ClassState {
        class_id: state.class_id,
        mean0: eta,
        cov0,
        n0: n_total,
        scatter: upsilon,
        last_branch: branch,
    })
}

/// Posterior marginals of the class mean and covariance:
/// `mu ~ t_{n'+n0-d+1}(eta, Upsilon / ((n'+n0)(n'+n0-d+1)))` and
/// `Sigma ~ W^-1(Upsilon^-1, n'+n0)`.
pub fn posterior_marginals(
    state: &ClassState,
    stats: &SliceStats,
) -> Result<(MvtParams, InvWishartParams)> {
    let d = state.dim() as f64;
    let n_total = (state.n0 + stats.count) as f64;
    let t_dof = n_total - d + 1.0;
    if !(t_dof > 0.0) {
        return Err(Error::Domain("posterior t marginal needs n' + n0 - d + 1 > 0"));
    }
    if !(n_total > d - 1.0) {
        return Err(Error::Domain("posterior inverse-wishart marginal needs n' + n0 > d - 1"));
    }
    let (eta, upsilon) = pooled(state, stats)?;
    let shape = upsilon.scaled(1.0 / (n_total * t_dof));
    let scale = cholesky(&upsilon)?.inverse();
    Ok((MvtParams { mean: eta, shape, dof: t_dof }, InvWishartParams { scale, dof: n_total }))
}

/// Per-class states for a fixed number of classes.
#[derive(Debug, Clone)]
pub struct ClassTracker {
    dim: usize,
    mode: CovMode,
    states: Vec<Option<ClassState>>,
}

impl ClassTracker {
    pub fn new(classes: usize, dim: usize, mode: CovMode) -> Self {
        Self { dim, mode, states: alloc::vec![None; classes] }
    }

    pub fn classes(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> CovMode {
        self.mode
    }

    /// First batch initialises the class, later ones apply the conjugate update.
    pub fn observe(&mut self, slice: &BatchSlice<'_>) -> Result<&ClassState> {
        let j = slice.class_id;
        if j >= self.states.len() {
            return Err(Error::InvalidArgument("class id out of range"));
        }
        if slice.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: slice.dim() });
        }
        let next = match &self.states[j] {
            None => init_mle(slice)?,
            Some(state) => bayes_update(state, slice, self.mode)?,
        };
        Ok(self.states[j].insert(next))
    }

    pub fn state(&self, class_id: usize) -> Option<&ClassState> {
        self.states.get(class_id).and_then(Option::as_ref)
    }

    /// All states, failing on the first class never observed.
    pub fn ready_states(&self) -> Result<Vec<&ClassState>> {
        self.states
            .iter()
            .enumerate()
            .map(|(j, s)| s.as_ref().ok_or(Error::UninitializedClass(j)))
            .collect()
    }

    pub fn states(&self) -> &[Option<ClassState>] {
        &self.states
    }

    pub fn set_state(&mut self, state: ClassState) -> Result<()> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: state.dim() });
        }
        let j = state.class_id;
        let slot = self.states.get_mut(j).ok_or(Error::InvalidArgument("class id out of range"))?;
        *slot = Some(state);
        Ok(())
    }

    /// Forgets every class; the next batch starts from the MLE again.
    pub fn reset(&mut self) {
        self.states.iter_mut().for_each(|s| *s = None);
    }
}
