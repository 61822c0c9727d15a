//! One training iteration: embed, refresh the class trackers, sample
//! triplets, take an SGD step on the loss.
//!
//! Sampled positives and negatives are constants of the step; only the
//! anchors (real embeddings) carry gradient back into the network.

use alloc::vec::Vec;

use crate::data::EmbeddingBatch;
use crate::loss::{self, LossKind};
use crate::matrix::Matrix;
use crate::mlp::{self, MlpModel, ParamGrads};
use crate::sampler::{sample_triplets, TripletBatch};
use crate::tracker::{BatchSlice, ClassTracker};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub loss: LossKind,
    pub margin: f64,
    pub lr: f64,
    /// Covariance jitter before factoring; `None` disables it.
    pub eps_scale: Option<f64>,
    /// Project embeddings onto the unit sphere before everything else.
    pub normalize: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { loss: LossKind::Triplet, margin: 0.25, lr: 1e-3, eps_scale: Some(1e-6), normalize: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub triplets: usize,
}

/// Network embeddings, optionally normalised, with what backward needs.
#[derive(Debug)]
struct Embedded {
    out: Matrix,
    trace: mlp::ForwardTrace,
    /// Raw outputs and their norms when normalising.
    norm: Option<(Matrix, Vec<f64>)>,
}

fn embed_for_training(model: &MlpModel, inputs: &Matrix, normalize: bool) -> Result<Embedded> {
    let (raw, trace) = mlp::forward(model, inputs)?;
    if normalize {
        let (y, norms) = mlp::l2_normalize_rows(&raw);
        Ok(Embedded { out: y.clone(), trace, norm: Some((y, norms)) })
    } else {
        Ok(Embedded { out: raw, trace, norm: None })
    }
}

/// Embeddings as the loss sees them.
pub fn embed_batch(model: &MlpModel, inputs: &Matrix, normalize: bool) -> Result<Matrix> {
    let raw = mlp::embed(model, inputs)?;
    Ok(if normalize { mlp::l2_normalize_rows(&raw).0 } else { raw })
}

fn loss_and_grads(
    model: &MlpModel,
    emb: &Embedded,
    companions: &TripletBatch,
    kind: LossKind,
    margin: f64,
) -> Result<(f64, ParamGrads)> {
    let b = emb.out.rows();
    if companions.groups.len() != b {
        return Err(Error::DimensionMismatch { expected: b, found: companions.groups.len() });
    }
    let mut batch = companions.clone();
    for (i, g) in batch.groups.iter_mut().enumerate() {
        g.anchor.copy_from_slice(emb.out.row(i));
    }
    let out = loss::evaluate(kind, &batch, margin);
    if !out.value.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    let mut grad = Matrix::zeros(b, emb.out.cols());
    for (i, g) in out.grads.iter().enumerate() {
        grad.row_mut(i).copy_from_slice(&g.anchor);
    }
    if let Some((y, norms)) = &emb.norm {
        grad = mlp::l2_normalize_backward(y, norms, &grad);
    }
    Ok((out.value, mlp::backward(model, &emb.trace, &grad)?))
}

/// Loss over `companions` with every anchor replaced by the network
/// embedding of the matching input row, and its parameter gradients.
pub fn anchor_loss(
    model: &MlpModel,
    inputs: &Matrix,
    companions: &TripletBatch,
    kind: LossKind,
    margin: f64,
    normalize: bool,
) -> Result<(f64, ParamGrads)> {
    let emb = embed_for_training(model, inputs, normalize)?;
    loss_and_grads(model, &emb, companions, kind, margin)
}

/// Runs one iteration on a class-balanced batch. Trackers are updated for
/// every class strictly before any triplet is sampled.
pub fn train_step(
    model: &mut MlpModel,
    tracker: &mut ClassTracker,
    inputs: &Matrix,
    labels: &[usize],
    per_class: usize,
    cfg: &StepConfig,
    rng: &mut Rng,
) -> Result<StepOutcome> {
    let emb = embed_for_training(model, inputs, cfg.normalize)?;
    if !emb.out.is_finite() {
        return Err(Error::NonFinite("embeddings"));
    }
    let batch = EmbeddingBatch::new(emb.out.clone(), labels.to_vec(), per_class, tracker.classes())?;
    for j in 0..tracker.classes() {
        tracker.observe(&BatchSlice::new(j, batch.class_rows(j))?)?;
    }
    let triplets = sample_triplets(&batch, tracker.states(), cfg.eps_scale, rng)?;
    let (value, grads) = loss_and_grads(model, &emb, &triplets, cfg.loss, cfg.margin)?;
    mlp::sgd_step(model, &grads, cfg.lr)?;
    Ok(StepOutcome { loss: value, triplets: triplets.triplet_count() })
}
