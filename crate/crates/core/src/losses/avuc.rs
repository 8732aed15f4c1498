use super::{BatchAnnotations, LossError};
use crate::diffcore::{Tape, Tensor, Var};

/// Smooth accuracy-versus-uncertainty settings.
///
/// A sample's certainty weight is
/// `σ((r − conf_threshold)/τ) · σ((unc_threshold − u)/τ)`; its uncertain
/// weight is the complement. Accuracy is the hard correctness bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvucParams {
    pub conf_threshold: f64,
    pub unc_threshold: f64,
    pub tau: f64,
}

impl Default for AvucParams {
    fn default() -> Self {
        Self {
            conf_threshold: 0.5,
            unc_threshold: 0.5,
            tau: 0.1,
        }
    }
}

const DENOM_EPS: f64 = 1e-8;

/// Soft counts `(n_AC, n_AU, n_IC, n_IU)` as scalar nodes.
pub(crate) fn soft_counts(
    tape: &mut Tape,
    batch: &BatchAnnotations,
    params: &AvucParams,
) -> Result<[Var; 4], LossError> {
    let n = tape.value(batch.confidence).len();
    if n == 0 || batch.correct.len() != n {
        return Err(LossError::EmptyBatch);
    }
    let inv_tau = 1.0 / params.tau;
    let c = tape.offset(batch.confidence, -params.conf_threshold);
    let c = tape.scale(c, inv_tau);
    let certain_conf = tape.sigmoid(c);
    let u = tape.rsub(params.unc_threshold, batch.uncertainty);
    let u = tape.scale(u, inv_tau);
    let certain_unc = tape.sigmoid(u);
    let certain = tape.mul(certain_conf, certain_unc)?;
    let uncertain = tape.rsub(1.0, certain);

    let acc = tape.constant(Tensor::vector(batch.correct.clone()));
    let inacc = tape.constant(Tensor::vector(batch.correct.iter().map(|c| 1.0 - c).collect()));
    let mut count = |w: Var, a: Var| -> Result<Var, LossError> {
        let prod = tape.mul(w, a)?;
        Ok(tape.sum(prod))
    };
    let n_ac = count(certain, acc)?;
    let n_au = count(uncertain, acc)?;
    let n_ic = count(certain, inacc)?;
    let n_iu = count(uncertain, inacc)?;
    Ok([n_ac, n_au, n_ic, n_iu])
}

/// `ln(1 + (n_AU + n_IC) / (n_AC + n_IU + 1e-8))`
pub fn avuc_loss(tape: &mut Tape, batch: &BatchAnnotations, params: &AvucParams) -> Result<Var, LossError> {
    if !(params.tau > 0.0) {
        return Err(LossError::Config("AvUC temperature must be positive".into()));
    }
    let [n_ac, n_au, n_ic, n_iu] = soft_counts(tape, batch, params)?;
    Ok(avuc_from_counts(tape, n_ac, n_au, n_ic, n_iu)?)
}

fn avuc_from_counts(tape: &mut Tape, n_ac: Var, n_au: Var, n_ic: Var, n_iu: Var) -> Result<Var, LossError> {
    let bad = tape.add(n_au, n_ic)?;
    let good = tape.add(n_ac, n_iu)?;
    let good = tape.offset(good, DENOM_EPS);
    let ratio = tape.div(bad, good)?;
    let ratio = tape.offset(ratio, 1.0);
    Ok(tape.ln(ratio))
}

/// The loss as a plain function of the four counts.
pub fn avuc_value_from_counts(n_ac: f64, n_au: f64, n_ic: f64, n_iu: f64) -> f64 {
    (1.0 + (n_au + n_ic) / (n_ac + n_iu + DENOM_EPS)).ln()
}
