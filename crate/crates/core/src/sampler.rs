//! Triplets drawn from the tracked class distributions.
//!
//! Every embedded instance of the batch is an anchor. It gets `c - 1`
//! synthetic positives from its own class Gaussian and one synthetic
//! negative from each other class Gaussian, in ascending class order.

use alloc::vec::Vec;

use crate::data::EmbeddingBatch;
use crate::distributions::MvnSampler;
use crate::tracker::ClassState;
use crate::{Error, Result, Rng};

/// One anchor and its sampled companions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGroup {
    pub anchor: Vec<f64>,
    pub anchor_label: usize,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
    /// Class of each negative, ascending.
    pub negative_labels: Vec<usize>,
}

/// All anchor groups of one mini-batch, in batch order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripletBatch {
    pub groups: Vec<AnchorGroup>,
}

impl TripletBatch {
    /// Anchor-negative pairs, `b * (c - 1)`.
    pub fn triplet_count(&self) -> usize {
        self.groups.iter().map(|g| g.negatives.len()).sum()
    }

    /// Translates every vector by `shift`.
    pub fn translated(&self, shift: &[f64]) -> TripletBatch {
        let mv = |v: &Vec<f64>| v.iter().zip(shift).map(|(a, s)| a + s).collect::<Vec<f64>>();
        TripletBatch {
            groups: self
                .groups
                .iter()
                .map(|g| AnchorGroup {
                    anchor: mv(&g.anchor),
                    anchor_label: g.anchor_label,
                    positives: g.positives.iter().map(mv).collect(),
                    negatives: g.negatives.iter().map(mv).collect(),
                    negative_labels: g.negative_labels.clone(),
                })
                .collect(),
        }
    }
}

/// Factored samplers for every class, built once per batch.
///
/// `eps_scale` jitters each covariance before factoring; `None` factors the
/// raw `cov0` and surfaces `NotPositiveDefinite` for singular estimates.
pub fn class_samplers(states: &[&ClassState], eps_scale: Option<f64>) -> Result<Vec<MvnSampler>> {
    states
        .iter()
        .enumerate()
        .map(|(j, s)| {
            if s.class_id != j {
                return Err(Error::InvalidArgument("class states must be ordered by class id"));
            }
            MvnSampler::new(&s.gaussian(eps_scale))
        })
        .collect()
}

/// Builds the triplet batch for `embeddings` from the (already updated)
/// class states, indexed by class id.
pub fn sample_triplets(
    embeddings: &EmbeddingBatch,
    states: &[Option<ClassState>],
    eps_scale: Option<f64>,
    rng: &mut Rng,
) -> Result<TripletBatch> {
    let ready: Vec<&ClassState> = states
        .iter()
        .enumerate()
        .map(|(j, s)| s.as_ref().ok_or(Error::UninitializedClass(j)))
        .collect::<Result<_>>()?;
    let c = ready.len();
    if c < 2 {
        return Err(Error::InvalidArgument("triplets need at least two classes"));
    }
    let d = embeddings.dim();
    if let Some(s) = ready.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: s.dim() });
    }
    let samplers = class_samplers(&ready, eps_scale)?;
    let mut groups = Vec::with_capacity(embeddings.len());
    for (i, &y) in embeddings.labels.iter().enumerate() {
        if y >= c {
            return Err(Error::UninitializedClass(y));
        }
        let mut positives = Vec::with_capacity(c - 1);
        let mut negatives = Vec::with_capacity(c - 1);
        let mut negative_labels = Vec::with_capacity(c - 1);
        for (j, sampler) in samplers.iter().enumerate() {
            if j == y {
                for _ in 0..c - 1 {
                    positives.push(sampler.sample(rng));
                }
            } else {
                negatives.push(sampler.sample(rng));
                negative_labels.push(j);
            }
        }
        groups.push(AnchorGroup {
            anchor: embeddings.vectors.row(i).to_vec(),
            anchor_label: y,
            positives,
            negatives,
            negative_labels,
        });
    }
    Ok(TripletBatch { groups })
}
