use crate::diffcore::{Tape, Tensor, TensorError, Var};

/// Dirichlet parameters derived from nonnegative evidence for one sample.
///
/// `alpha = evidence + 1`, `strength = Σ alpha`, `probs = alpha / strength`,
/// `belief = evidence / strength`, `uncertainty = M / strength`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletOutput {
    pub evidence: Vec<f64>,
    pub alpha: Vec<f64>,
    pub strength: f64,
    pub probs: Vec<f64>,
    pub belief: Vec<f64>,
    pub uncertainty: f64,
}

impl DirichletOutput {
    /// Negative entries are clipped to zero.
    pub fn from_evidence(evidence: &[f64]) -> Self {
        let evidence: Vec<f64> = evidence.iter().map(|&e| e.max(0.0)).collect();
        let alpha: Vec<f64> = evidence.iter().map(|e| e + 1.0).collect();
        let strength: f64 = alpha.iter().sum();
        Self {
            probs: alpha.iter().map(|a| a / strength).collect(),
            belief: evidence.iter().map(|e| e / strength).collect(),
            uncertainty: alpha.len() as f64 / strength,
            evidence,
            alpha,
            strength,
        }
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self::from_evidence(logits)
    }
}

/// Evidential head nodes on a tape. `strength` and `uncertainty` are `[n]`,
/// the rest `[n, M]`.
#[derive(Debug, Clone, Copy)]
pub struct EvidentialHead {
    pub evidence: Var,
    pub alpha: Var,
    pub strength: Var,
    pub probs: Var,
    pub uncertainty: Var,
    pub classes: usize,
}

/// ReLU evidence over `logits`, recorded on the tape.
pub fn evidence_head(tape: &mut Tape, logits: Var, classes: usize) -> Result<EvidentialHead, TensorError> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[1] != classes {
        return Err(TensorError::BadShape(shape));
    }
    let n = shape[0];
    let evidence = tape.relu(logits);
    let alpha = tape.offset(evidence, 1.0);
    let strength = tape.sum_rows(alpha)?;
    let strength_b = tape.broadcast_col(strength, classes)?;
    let probs = tape.div(alpha, strength_b)?;
    let m = tape.constant(Tensor::filled(&[n], classes as f64));
    let uncertainty = tape.div(m, strength)?;
    Ok(EvidentialHead {
        evidence,
        alpha,
        strength,
        probs,
        uncertainty,
        classes,
    })
}
