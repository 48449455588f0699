//! Training objectives. Each returns the batch-mean loss together with its
//! gradient with respect to the inputs (embeddings or logits), ready to be
//! handed to [`crate::encoder::backprop`].

use ndarray::Array1;
use thiserror::Error;

use crate::encoder::{cosine_with_grad, EncoderError, Embedding};

/// Contrastive temperature used when none is configured.
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch fields have mismatched lengths: {0}")]
    Shape(String),
    #[error("zero-norm embedding at batch index {0}")]
    ZeroNorm(usize),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("target {0} outside [0, 1]")]
    Target(f64),
}

/// Pairs `(h_i, h'_i)` with similarity targets `y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub left: Vec<Embedding>,
    pub right: Vec<Embedding>,
    pub targets: Vec<f64>,
}

/// Anchors with one positive and one hard negative each, plus a soft label
/// for every positive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub anchors: Vec<Embedding>,
    pub positives: Vec<Embedding>,
    pub negatives: Vec<Embedding>,
    pub targets: Vec<f64>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch {
    pub logits: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub left: Vec<Array1<f64>>,
    pub right: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    pub anchors: Vec<Array1<f64>>,
    pub positives: Vec<Array1<f64>>,
    pub negatives: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitLoss {
    pub loss: f64,
    pub logits: Vec<f64>,
}

fn check_lengths(n: usize, others: &[(&str, usize)]) -> Result<(), LossError> {
    if n == 0 {
        return Err(LossError::EmptyBatch);
    }
    for (name, len) in others {
        if *len != n {
            return Err(LossError::Shape(format!("{name} has {len} entries, expected {n}")));
        }
    }
    Ok(())
}

fn check_targets(targets: &[f64]) -> Result<(), LossError> {
    match targets.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        Some(&y) => Err(LossError::Target(y)),
        None => Ok(()),
    }
}

fn cos_grad(u: &Embedding, v: &Embedding, index: usize) -> Result<(f64, Array1<f64>, Array1<f64>), LossError> {
    cosine_with_grad(&u.0, &v.0).map_err(|e| match e {
        EncoderError::ZeroNorm => LossError::ZeroNorm(index),
        other => LossError::Shape(other.to_string()),
    })
}

/// `(1/N) Σ (cos(h_i, h'_i) − y_i)²`.
pub fn mse_loss(batch: &PairBatch) -> Result<PairLoss, LossError> {
    let n = batch.left.len();
    check_lengths(n, &[("right", batch.right.len()), ("targets", batch.targets.len())])?;
    check_targets(&batch.targets)?;
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for i in 0..n {
        let (c, du, dv) = cos_grad(&batch.left[i], &batch.right[i], i)?;
        let r = c - batch.targets[i];
        loss += r * r;
        let g = 2.0 * r * scale;
        left.push(du * g);
        right.push(dv * g);
    }
    Ok(PairLoss {
        loss: loss * scale,
        left,
        right,
    })
}

/// Soft-label InfoNCE.
///
/// For anchor `i` the candidates are every positive and every hard negative
/// in the batch (`2N` columns, including its own two). The per-anchor term
/// `y_i · log softmax_i(own positive)` is averaged over the batch and negated.
pub fn soft_infonce(batch: &TripletBatch) -> Result<TripletLoss, LossError> {
    check_targets(&batch.targets)?;
    contrastive(batch, &batch.targets)
}

/// InfoNCE with one-hot targets: [`soft_infonce`] with every `y_i = 1`.
pub fn infonce(batch: &TripletBatch) -> Result<TripletLoss, LossError> {
    let ones = vec![1.0; batch.anchors.len()];
    contrastive(batch, &ones)
}

fn contrastive(batch: &TripletBatch, weights: &[f64]) -> Result<TripletLoss, LossError> {
    let n = batch.anchors.len();
    check_lengths(
        n,
        &[
            ("positives", batch.positives.len()),
            ("negatives", batch.negatives.len()),
            ("targets", weights.len()),
        ],
    )?;
    let tau = batch.temperature;
    if !tau.is_finite() || tau <= 0.0 {
        return Err(LossError::Temperature(tau));
    }
    let dim = batch.anchors[0].dim();
    let zeros = || vec![Array1::<f64>::zeros(dim); n];
    let (mut g_anchor, mut g_pos, mut g_neg) = (zeros(), zeros(), zeros());
    let mut loss = 0.0;
    let scale = 1.0 / n as f64;

    for i in 0..n {
        let anchor = &batch.anchors[i];
        // Columns 0..n are positives, n..2n hard negatives.
        let mut logits = Vec::with_capacity(2 * n);
        let mut grads = Vec::with_capacity(2 * n);
        for (k, cand) in batch.positives.iter().chain(&batch.negatives).enumerate() {
            let (c, du, dv) = cos_grad(anchor, cand, if k < n { k } else { k - n })?;
            logits.push(c / tau);
            grads.push((du, dv));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
        let log_norm = max + sum.ln();
        let y = weights[i];
        loss -= y * (logits[i] - log_norm);

        // ∂L/∂z_k = (y_i / N) (softmax_k − [k = i])
        for (k, (z, (du, dv))) in logits.iter().zip(grads).enumerate() {
            let p = (z - log_norm).exp();
            let dz = y * scale * (p - if k == i { 1.0 } else { 0.0 }) / tau;
            if dz == 0.0 {
                continue;
            }
            g_anchor[i].scaled_add(dz, &du);
            if k < n {
                g_pos[k].scaled_add(dz, &dv);
            } else {
                g_neg[k - n].scaled_add(dz, &dv);
            }
        }
    }
    Ok(TripletLoss {
        loss: loss * scale,
        anchors: g_anchor,
        positives: g_pos,
        negatives: g_neg,
    })
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on logits with soft targets; `∂L/∂ŷ_i = (σ(ŷ_i) − y_i)/N`.
pub fn bce_loss(batch: &LogitBatch) -> Result<LogitLoss, LossError> {
    let n = batch.logits.len();
    check_lengths(n, &[("targets", batch.targets.len())])?;
    check_targets(&batch.targets)?;
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(n);
    for (&x, &y) in batch.logits.iter().zip(&batch.targets) {
        // −[y log σ(x) + (1−y) log(1−σ(x))] = y·softplus(−x) + (1−y)·softplus(x)
        loss += y * softplus(-x) + (1.0 - y) * softplus(x);
        grads.push((sigmoid(x) - y) * scale);
    }
    Ok(LogitLoss {
        loss: loss * scale,
        logits: grads,
    })
}

/// Binary entropy of the mean target: the BCE of the best constant predictor.
pub fn constant_predictor_bce(targets: &[f64]) -> f64 {
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    term(mean) + term(1.0 - mean)
}
