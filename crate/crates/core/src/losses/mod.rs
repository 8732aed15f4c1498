//! Training objectives and the rules that combine them per head kind.

mod avuc;
mod combine;
mod enn;
mod ldu;
mod mmce;

pub use avuc::{avuc_loss, avuc_value_from_counts, AvucParams};
pub use combine::{total_loss, LossBreakdown, LossConfig, LossWeights};
pub use enn::enn_loss;
pub use ldu::{ldu_aux_losses, LduAux};
pub use mmce::{mmce_loss, DEFAULT_KERNEL_WIDTH};

use thiserror::Error;

use crate::diffcore::{Tape, Tensor, TensorError, Var};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;
/// Clamp applied to predicted uncertainties inside binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{0}")]
    Config(String),
    #[error("Dirichlet parameter {0} below 1")]
    InvalidAlpha(f64),
}

/// Per-sample quantities the uncertainty-aware losses consume.
///
/// `confidence` and `uncertainty` are `[n]` nodes; `correct` holds the hard
/// 0/1 correctness of each prediction and is not differentiated.
#[derive(Debug, Clone)]
pub struct BatchAnnotations {
    pub confidence: Var,
    pub uncertainty: Var,
    pub correct: Vec<f64>,
}

impl BatchAnnotations {
    /// Correctness from argmax of `probs` against `labels`.
    pub fn from_probs(tape: &Tape, probs: Var, confidence: Var, uncertainty: Var, labels: &[usize]) -> Self {
        let p = tape.value(probs);
        let correct = (0..p.rows())
            .map(|i| f64::from(argmax(p.row(i)) == labels[i]))
            .collect();
        Self {
            confidence,
            uncertainty,
            correct,
        }
    }
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (j, &v)| if v > best.1 { (j, v) } else { best },
        )
        .0
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<(), LossError> {
    if labels.is_empty() || rows == 0 {
        return Err(LossError::EmptyBatch);
    }
    if labels.len() != rows {
        return Err(TensorError::BadShape(vec![rows, labels.len()]).into());
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(LossError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean of `−ln max(p[i, y_i], 1e-12)` over the batch.
pub fn cross_entropy(tape: &mut Tape, probs: Var, labels: &[usize]) -> Result<Var, LossError> {
    let p = tape.value(probs);
    check_labels(labels, p.rows(), p.cols())?;
    let picked = tape.gather(probs, labels)?;
    let clamped = tape.clamp(picked, PROB_FLOOR, 1.0);
    let logp = tape.ln(clamped);
    let mean = tape.mean(logp);
    Ok(tape.scale(mean, -1.0))
}

/// Evaluates a loss builder on constants and returns its value.
pub(crate) fn evaluate(build: impl FnOnce(&mut Tape) -> Result<Var, LossError>) -> Result<f64, LossError> {
    let mut tape = Tape::new();
    let out = build(&mut tape)?;
    Ok(tape.value(out).item())
}

/// Cross-entropy of fixed probability rows, for tests and reporting.
pub fn cross_entropy_value(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64, LossError> {
    evaluate(|tape| {
        let p = tape.constant(Tensor::from_rows(probs)?);
        cross_entropy(tape, p, labels)
    })
}
