use super::{
    avuc_loss, cross_entropy, enn_loss, ldu_aux_losses, mmce_loss, AvucParams, BatchAnnotations, LossError,
    DEFAULT_KERNEL_WIDTH,
};
use crate::diffcore::{Tape, Var};
use crate::dum::{HeadKind, HeadNodes};

/// Nonnegative weights of every auxiliary term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossWeights {
    /// Dirichlet KL regularizer.
    pub enn: f64,
    /// Accuracy-versus-uncertainty term.
    pub avuc: f64,
    /// Kernel calibration term.
    pub mmce: f64,
    /// Prototype-softmax entropy.
    pub entropy: f64,
    /// Prototype dissimilarity.
    pub dissimilarity: f64,
    /// Uncertainty BCE.
    pub uncertainty: f64,
}

impl LossWeights {
    fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("lambda_enn", self.enn),
            ("lambda_a", self.avuc),
            ("lambda_m", self.mmce),
            ("lambda_e", self.entropy),
            ("lambda_d", self.dissimilarity),
            ("lambda_u", self.uncertainty),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub avuc: AvucParams,
    pub kernel_width: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            avuc: AvucParams::default(),
            kernel_width: DEFAULT_KERNEL_WIDTH,
        }
    }
}

impl LossConfig {
    /// Rejects negative weights and weights the head cannot use.
    pub fn validate(&self, head: HeadKind) -> Result<(), LossError> {
        for (name, w) in self.weights.named() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(LossError::Config(format!(
                    "{name} must be a nonnegative number, got {w}"
                )));
            }
        }
        let w = &self.weights;
        if head != HeadKind::Evidential && w.enn > 0.0 {
            return Err(LossError::Config(format!(
                "lambda_enn > 0 requires head = enn, but head = {head}"
            )));
        }
        if head != HeadKind::Prototype {
            for (name, v) in [
                ("lambda_e", w.entropy),
                ("lambda_d", w.dissimilarity),
                ("lambda_u", w.uncertainty),
            ] {
                if v > 0.0 {
                    return Err(LossError::Config(format!(
                        "{name} > 0 requires head = dm, but head = {head}"
                    )));
                }
            }
        }
        if !(self.kernel_width > 0.0) {
            return Err(LossError::Config("mmce_width must be positive".into()));
        }
        if !(self.avuc.tau > 0.0) {
            return Err(LossError::Config("avuc_tau must be positive".into()));
        }
        Ok(())
    }
}

/// The objective and its named components (each already unweighted).
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: Var,
    /// Cross-entropy, or the evidential loss for ENN heads.
    pub base: Var,
    pub avuc: Option<Var>,
    pub mmce: Option<Var>,
}

fn weighted_add(tape: &mut Tape, acc: Var, term: Var, weight: f64) -> Result<Var, LossError> {
    let scaled = tape.scale(term, weight);
    Ok(tape.add(acc, scaled)?)
}

/// Builds the training objective for one batch.
///
/// * softmax: CE, plus λ_A·AvUC and/or λ_M·MMCE on `(max p, 1 − max p)`
/// * enn: evidential loss with λ_ENN·KL, plus the same terms fed with
///   `(max p̂, M/S)`
/// * dm: CE on the prototype softmax + λ_E·entropy + λ_D·dissimilarity +
///   λ_u·uncertainty BCE, plus the uncertainty-aware terms
///
/// Terms with zero weight are never recorded, so a configuration with every
/// auxiliary weight at zero is exactly the base loss.
pub fn total_loss(
    tape: &mut Tape,
    config: &LossConfig,
    head: &HeadNodes,
    labels: &[usize],
) -> Result<LossBreakdown, LossError> {
    config.validate(head.kind())?;
    let w = &config.weights;

    let base = match head {
        HeadNodes::Evidential(h) => enn_loss(tape, h, labels, w.enn)?,
        _ => cross_entropy(tape, head.probs(), labels)?,
    };
    let mut total = base;

    let prototype_aux = matches!(head, HeadNodes::Prototype { .. })
        && (w.entropy > 0.0 || w.dissimilarity > 0.0 || w.uncertainty > 0.0);
    let needs_annotations = w.avuc > 0.0 || w.mmce > 0.0 || prototype_aux;
    let annotations = if needs_annotations {
        let (conf, unc) = head.confidence_uncertainty(tape)?;
        Some(BatchAnnotations::from_probs(tape, head.probs(), conf, unc, labels))
    } else {
        None
    };

    if let (HeadNodes::Prototype { prototypes, probs, .. }, Some(batch)) = (head, &annotations) {
        if prototype_aux {
            let aux = ldu_aux_losses(tape, *prototypes, *probs, batch.uncertainty, &batch.correct)?;
            for (term, weight) in [
                (aux.entropy, w.entropy),
                (aux.dissimilarity, w.dissimilarity),
                (aux.uncertainty, w.uncertainty),
            ] {
                if weight > 0.0 {
                    total = weighted_add(tape, total, term, weight)?;
                }
            }
        }
    }

    let mut avuc = None;
    let mut mmce = None;
    if let Some(batch) = &annotations {
        if w.avuc > 0.0 {
            let term = avuc_loss(tape, batch, &config.avuc)?;
            total = weighted_add(tape, total, term, w.avuc)?;
            avuc = Some(term);
        }
        if w.mmce > 0.0 {
            let term = mmce_loss(tape, batch, config.kernel_width)?;
            total = weighted_add(tape, total, term, w.mmce)?;
            mmce = Some(term);
        }
    }

    Ok(LossBreakdown {
        total,
        base,
        avuc,
        mmce,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    fn softmax_head(tape: &mut Tape, logits: Vec<Vec<f64>>) -> HeadNodes {
        let l = tape.param(Tensor::from_rows(&logits).unwrap());
        let p = tape.softmax(l).unwrap();
        HeadNodes::Softmax { logits: l, probs: p }
    }

    #[test]
    fn zero_weights_reduce_to_cross_entropy_bitwise() {
        let logits = vec![vec![0.3, -1.0], vec![2.0, 0.1], vec![-0.5, 0.4]];
        let labels = [0, 0, 1];
        let mut tape = Tape::new();
        let head = softmax_head(&mut tape, logits.clone());
        let out = total_loss(&mut tape, &LossConfig::default(), &head, &labels).unwrap();
        let mut ref_tape = Tape::new();
        let ref_head = softmax_head(&mut ref_tape, logits);
        let ce = cross_entropy(&mut ref_tape, ref_head.probs(), &labels).unwrap();
        assert_eq!(
            tape.value(out.total).item().to_bits(),
            ref_tape.value(ce).item().to_bits()
        );
    }

    #[test]
    fn avuc_weight_is_linear() {
        let logits = vec![vec![0.3, -1.0], vec![2.0, 0.1], vec![-0.5, 0.4], vec![1.0, 1.2]];
        let labels = [0, 1, 1, 0];
        let mut cfg = LossConfig::default();
        cfg.weights.avuc = 0.6;
        let mut tape = Tape::new();
        let head = softmax_head(&mut tape, logits);
        let out = total_loss(&mut tape, &cfg, &head, &labels).unwrap();
        let c = tape.value(out.base).item();
        let v = tape.value(out.avuc.unwrap()).item();
        assert!(v > 0.0);
        assert!((tape.value(out.total).item() - (c + 0.6 * v)).abs() < 1e-15);
    }

    #[test]
    fn prototype_weights_need_dm_head() {
        let mut cfg = LossConfig::default();
        cfg.weights.entropy = 0.9;
        let err = cfg.validate(HeadKind::Softmax).unwrap_err();
        assert!(err.to_string().contains("lambda_e"));
        assert!(cfg.validate(HeadKind::Prototype).is_ok());
    }

    #[test]
    fn enn_weight_needs_enn_head() {
        let mut cfg = LossConfig::default();
        cfg.weights.enn = 40.0;
        assert!(cfg.validate(HeadKind::Prototype).is_err());
        assert!(cfg.validate(HeadKind::Evidential).is_ok());
    }

    #[test]
    fn negative_weight_rejected() {
        let mut cfg = LossConfig::default();
        cfg.weights.mmce = -1.0;
        assert!(cfg.validate(HeadKind::Softmax).is_err());
    }
}
