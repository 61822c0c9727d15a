//! Triplet (hinge) and NCA (softmax) losses over a [`TripletBatch`], with
//! analytic gradients for every vector.
//!
//! Both losses sum over anchors `i`, positives `k` and negatives `l` with no
//! batch averaging. Squared Euclidean distances throughout.

use alloc::vec::Vec;

use crate::matrix::sq_dist;
use crate::sampler::{AnchorGroup, TripletBatch};

/// Which objective to minimise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `sum [m + |a-p|^2 - |a-n|^2]_+`
    #[default]
    Triplet,
    /// `-sum_k ln( exp(-|a-p_k|^2) / sum_l exp(-|a-n_l|^2) )`
    Nca,
}

/// Gradients for one anchor group, shaped like the group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupGrads {
    pub anchor: Vec<f64>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl GroupGrads {
    fn zeros_like(g: &AnchorGroup) -> Self {
        let d = g.anchor.len();
        Self {
            anchor: alloc::vec![0.0; d],
            positives: alloc::vec![alloc::vec![0.0; d]; g.positives.len()],
            negatives: alloc::vec![alloc::vec![0.0; d]; g.negatives.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Vec<GroupGrads>,
}

pub fn evaluate(kind: LossKind, batch: &TripletBatch, margin: f64) -> LossOutput {
    match kind {
        LossKind::Triplet => triplet_loss(batch, margin),
        LossKind::Nca => nca_loss(batch),
    }
}

/// Hinge triplet loss over all `(k, l)` pairings of every anchor group.
///
/// Brackets that are exactly zero count as inactive (zero subgradient).
pub fn triplet_loss(batch: &TripletBatch, margin: f64) -> LossOutput {
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(batch.groups.len());
    for g in &batch.groups {
        let mut gg = GroupGrads::zeros_like(g);
        let dp: Vec<f64> = g.positives.iter().map(|p| sq_dist(&g.anchor, p)).collect();
        let dn: Vec<f64> = g.negatives.iter().map(|n| sq_dist(&g.anchor, n)).collect();
        for (k, p) in g.positives.iter().enumerate() {
            for (l, n) in g.negatives.iter().enumerate() {
                let bracket = margin + dp[k] - dn[l];
                if bracket <= 0.0 {
                    continue;
                }
                value += bracket;
                // d/da = 2(n - p), d/dp = -2(a - p), d/dn = 2(a - n)
                for t in 0..g.anchor.len() {
                    let a = g.anchor[t];
                    gg.anchor[t] += 2.0 * (n[t] - p[t]);
                    gg.positives[k][t] -= 2.0 * (a - p[t]);
                    gg.negatives[l][t] += 2.0 * (a - n[t]);
                }
            }
        }
        grads.push(gg);
    }
    LossOutput { value, grads }
}

/// `ln sum_l exp(-dn_l)` with the max shift.
fn log_sum_exp_neg(dn: &[f64]) -> f64 {
    let shift = dn.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    shift.is_finite().then(|| -shift + libm::log(dn.iter().map(|&v| libm::exp(shift - v)).sum::<f64>()))
        .unwrap_or(f64::NEG_INFINITY)
}

/// Per-positive NCA terms `|a - p_k|^2 + ln sum_l exp(-|a - n_l|^2)` of one group.
pub fn nca_terms(g: &AnchorGroup) -> Vec<f64> {
    let dn: Vec<f64> = g.negatives.iter().map(|n| sq_dist(&g.anchor, n)).collect();
    let lse = log_sum_exp_neg(&dn);
    g.positives.iter().map(|p| sq_dist(&g.anchor, p) + lse).collect()
}

/// Softmax (NCA-style) loss; the denominator runs over the negatives only.
pub fn nca_loss(batch: &TripletBatch) -> LossOutput {
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(batch.groups.len());
    for g in &batch.groups {
        let mut gg = GroupGrads::zeros_like(g);
        let dn: Vec<f64> = g.negatives.iter().map(|n| sq_dist(&g.anchor, n)).collect();
        let lse = log_sum_exp_neg(&dn);
        let kp = g.positives.len() as f64;
        for (k, p) in g.positives.iter().enumerate() {
            value += sq_dist(&g.anchor, p) + lse;
            // d|a-p|^2/da = 2(a - p), d/dp = -2(a - p)
            for t in 0..g.anchor.len() {
                let diff = g.anchor[t] - p[t];
                gg.anchor[t] += 2.0 * diff;
                gg.positives[k][t] = -2.0 * diff;
            }
        }
        // d lse/da = -sum_l w_l 2(a - n_l), d lse/dn_l = w_l 2(a - n_l); times K positives
        for (l, n) in g.negatives.iter().enumerate() {
            let w = libm::exp(-dn[l] - lse);
            for t in 0..g.anchor.len() {
                let diff = g.anchor[t] - n[t];
                gg.anchor[t] -= kp * w * 2.0 * diff;
                gg.negatives[l][t] = kp * w * 2.0 * diff;
            }
        }
        grads.push(gg);
    }
    LossOutput { value, grads }
}
