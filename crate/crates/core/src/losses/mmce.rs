use super::{BatchAnnotations, LossError};
use crate::diffcore::{Tape, Tensor, Var};

/// Laplacian kernel width.
pub const DEFAULT_KERNEL_WIDTH: f64 = 0.4;

/// Weighted maximum mean calibration error with a Laplacian kernel
/// `k(r_i, r_j) = exp(−|r_i − r_j| / width)`.
///
/// With `m` correct samples out of `n`:
///
/// ```text
///   Σ_{c_i=c_j=0} r_i r_j k / (n−m)²
/// + Σ_{c_i=c_j=1} (1−r_i)(1−r_j) k / m²
/// − 2 Σ_{c_i=1,c_j=0} (1−r_i) r_j k / (m (n−m))
/// ```
///
/// Terms whose index set is empty contribute nothing. The result is the
/// square root of the sum clamped at zero.
pub fn mmce_loss(tape: &mut Tape, batch: &BatchAnnotations, width: f64) -> Result<Var, LossError> {
    if !(width > 0.0) {
        return Err(LossError::Config("MMCE kernel width must be positive".into()));
    }
    let n = tape.value(batch.confidence).len();
    if n == 0 || batch.correct.len() != n {
        return Err(LossError::EmptyBatch);
    }
    let m = batch.correct.iter().filter(|&&c| c == 1.0).count();
    let wrong = n - m;

    let r = batch.confidence;
    let d = tape.pair_diff(r)?;
    let d = tape.abs(d);
    let d = tape.scale(d, -1.0 / width);
    let kernel = tape.exp(d);
    let q = tape.rsub(1.0, r);

    let mask = |f: &dyn Fn(bool, bool) -> bool| -> Tensor {
        let data = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                f64::from(f(batch.correct[i] == 1.0, batch.correct[j] == 1.0))
            })
            .collect();
        Tensor::matrix(n, n, data).expect("square mask")
    };

    let mut terms = Vec::with_capacity(3);
    let mut term = |tape: &mut Tape, a: Var, b: Var, mask: Tensor, coeff: f64| -> Result<(), LossError> {
        let outer = tape.outer(a, b)?;
        let weighted = tape.mul(outer, kernel)?;
        let mask = tape.constant(mask);
        let masked = tape.mul(weighted, mask)?;
        let s = tape.sum(masked);
        terms.push(tape.scale(s, coeff));
        Ok(())
    };
    if wrong > 0 {
        let coeff = 1.0 / (wrong * wrong) as f64;
        term(tape, r, r, mask(&|ci, cj| !ci && !cj), coeff)?;
    }
    if m > 0 {
        let coeff = 1.0 / (m * m) as f64;
        term(tape, q, q, mask(&|ci, cj| ci && cj), coeff)?;
    }
    if m > 0 && wrong > 0 {
        let coeff = -2.0 / (m * wrong) as f64;
        term(tape, q, r, mask(&|ci, cj| ci && !cj), coeff)?;
    }

    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    let total = tape.clamp(total, 0.0, f64::INFINITY);
    Ok(tape.sqrt(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::evaluate;

    fn value(conf: &[f64], correct: &[f64], width: f64) -> f64 {
        evaluate(|tape| {
            let r = tape.constant(Tensor::vector(conf.to_vec()));
            let u = tape.rsub(1.0, r);
            let batch = BatchAnnotations {
                confidence: r,
                uncertainty: u,
                correct: correct.to_vec(),
            };
            mmce_loss(tape, &batch, width)
        })
        .unwrap()
    }

    #[test]
    fn confident_and_correct_is_zero() {
        assert_eq!(value(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 0.4), 0.0);
    }

    #[test]
    fn confidence_equal_to_correctness_is_zero() {
        assert_eq!(value(&[1.0, 0.0, 1.0, 0.0], &[1.0, 0.0, 1.0, 0.0], 0.4), 0.0);
    }

    #[test]
    fn two_sample_batch_matches_hand_sum() {
        // c = (1, 0), r = (0.9, 0.8); m = 1, n − m = 1
        let k = (-0.1f64 / 0.4).exp();
        let expected = (0.8f64 * 0.8 + 0.1 * 0.1 - 2.0 * 0.1 * 0.8 * k).sqrt();
        let got = value(&[0.9, 0.8], &[1.0, 0.0], 0.4);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn rejects_bad_width() {
        let r = evaluate(|tape| {
            let r = tape.constant(Tensor::vector(vec![0.5]));
            let batch = BatchAnnotations {
                confidence: r,
                uncertainty: r,
                correct: vec![1.0],
            };
            mmce_loss(tape, &batch, 0.0)
        });
        assert!(r.is_err());
    }
}
