use super::{check_labels, LossError};
use crate::diffcore::{Tape, Tensor, Var};
use crate::dum::EvidentialHead;
use crate::special::ln_gamma;

/// Evidential loss averaged over the batch:
/// `ψ(S) − ψ(α_y) + λ · KL(Dir(α̃) ‖ Dir(1, …, 1))` with `α̃ = y + (1 − y) ⊙ α`.
///
/// The KL term is skipped entirely when `lambda == 0`.
pub fn enn_loss(tape: &mut Tape, head: &EvidentialHead, labels: &[usize], lambda: f64) -> Result<Var, LossError> {
    let alpha = tape.value(head.alpha);
    let (n, m) = (alpha.rows(), alpha.cols());
    check_labels(labels, n, m)?;
    if let Some(&a) = alpha.data().iter().find(|&&a| !(a >= 1.0)) {
        return Err(LossError::InvalidAlpha(a));
    }

    let alpha_y = tape.gather(head.alpha, labels)?;
    let data = tape.digamma_diff(head.strength, alpha_y)?;
    let data = tape.mean(data);
    if lambda == 0.0 {
        return Ok(data);
    }

    // α̃: the true-class entry is reset to 1, others keep their α.
    let mut keep = vec![1.0; n * m];
    let mut onehot = vec![0.0; n * m];
    for (i, &y) in labels.iter().enumerate() {
        keep[i * m + y] = 0.0;
        onehot[i * m + y] = 1.0;
    }
    let keep = tape.constant(Tensor::matrix(n, m, keep)?);
    let onehot = tape.constant(Tensor::matrix(n, m, onehot)?);
    let masked = tape.mul(head.alpha, keep)?;
    let tilde = tape.add(masked, onehot)?;
    let s_tilde = tape.sum_rows(tilde)?;

    // KL = lnΓ(S̃) − lnΓ(M) − Σ lnΓ(α̃_c) + Σ (α̃_c − 1)(ψ(α̃_c) − ψ(S̃))
    let lg_s = tape.ln_gamma(s_tilde);
    let lg_s = tape.offset(lg_s, -ln_gamma(m as f64));
    let lg_a = tape.ln_gamma(tilde);
    let lg_a = tape.sum_rows(lg_a)?;
    let s_b = tape.broadcast_col(s_tilde, m)?;
    let dig = tape.digamma_diff(tilde, s_b)?;
    let excess = tape.offset(tilde, -1.0);
    let cross = tape.mul(excess, dig)?;
    let cross = tape.sum_rows(cross)?;
    let kl = tape.sub(lg_s, lg_a)?;
    let kl = tape.add(kl, cross)?;
    let kl = tape.mean(kl);
    let kl = tape.scale(kl, lambda);
    Ok(tape.add(data, kl)?)
}
