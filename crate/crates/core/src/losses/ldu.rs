use super::{LossError, BCE_CLAMP, PROB_FLOOR};
use crate::diffcore::{Tape, Tensor, Var};

/// The three auxiliary terms of the prototype-head objective.
#[derive(Debug, Clone, Copy)]
pub struct LduAux {
    /// Mean Shannon entropy of the prototype-softmax rows.
    pub entropy: Var,
    /// Mean `exp(−‖p_a − p_b‖²)` over prototype pairs.
    pub dissimilarity: Var,
    /// Mean binary cross-entropy of predicted uncertainty against the error
    /// indicator.
    pub uncertainty: Var,
}

/// `prototypes` is `[M, d]`, `probs` `[n, M]`, `uncertainty` `[n]` in
/// `[0, 1]`, `correct` the hard 0/1 correctness per sample.
pub fn ldu_aux_losses(
    tape: &mut Tape,
    prototypes: Var,
    probs: Var,
    uncertainty: Var,
    correct: &[f64],
) -> Result<LduAux, LossError> {
    let n = tape.value(probs).rows();
    if n == 0 || correct.len() != n || tape.value(uncertainty).len() != n {
        return Err(LossError::EmptyBatch);
    }

    // entropy: −Σ p ln p, with p floored inside the log only
    let floored = tape.clamp(probs, PROB_FLOOR, 1.0);
    let logp = tape.ln(floored);
    let plogp = tape.mul(probs, logp)?;
    let row = tape.sum_rows(plogp)?;
    let mean = tape.mean(row);
    let entropy = tape.scale(mean, -1.0);

    let classes = tape.value(prototypes).rows();
    let dissimilarity = if classes < 2 {
        tape.constant(Tensor::scalar(0.0))
    } else {
        let d2 = tape.sq_dist(prototypes, prototypes)?;
        let neg = tape.scale(d2, -1.0);
        let sim = tape.exp(neg);
        let upper = (0..classes * classes)
            .map(|k| f64::from(k / classes < k % classes))
            .collect();
        let upper = tape.constant(Tensor::matrix(classes, classes, upper)?);
        let pairs = tape.mul(sim, upper)?;
        let s = tape.sum(pairs);
        let count = (classes * (classes - 1) / 2) as f64;
        tape.scale(s, 1.0 / count)
    };

    // BCE(u, e) with e = 1 − correct
    let u = tape.clamp(uncertainty, BCE_CLAMP, 1.0 - BCE_CLAMP);
    let err = tape.constant(Tensor::vector(correct.iter().map(|c| 1.0 - c).collect()));
    let ok = tape.constant(Tensor::vector(correct.to_vec()));
    let ln_u = tape.ln(u);
    let one_minus = tape.rsub(1.0, u);
    let ln_1mu = tape.ln(one_minus);
    let a = tape.mul(err, ln_u)?;
    let b = tape.mul(ok, ln_1mu)?;
    let ll = tape.add(a, b)?;
    let mean = tape.mean(ll);
    let uncertainty = tape.scale(mean, -1.0);

    Ok(LduAux {
        entropy,
        dissimilarity,
        uncertainty,
    })
}
