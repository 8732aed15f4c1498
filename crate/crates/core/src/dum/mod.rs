//! Deterministic uncertainty heads: evidential (Dirichlet) output, spectral
//! normalization of hidden weights, and the distance-to-prototype layer.

mod evidential;
mod prototype;
mod spectral;

pub use evidential::{evidence_head, DirichletOutput, EvidentialHead};
pub use prototype::{dm_layer, PrototypeSet};
pub use spectral::{spectral_normalize, SpectralNorm, SpectralNormError};

use std::fmt;
use std::str::FromStr;

use crate::diffcore::{softmax_rows, Tape, Tensor, TensorError, Var};

/// Which output layer a network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeadKind {
    /// Linear logits followed by softmax. Also used by spectrally normalized
    /// networks.
    Softmax,
    /// ReLU evidence parameterizing a Dirichlet.
    Evidential,
    /// Negative distances to trainable class prototypes, then softmax.
    Prototype,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Softmax => "softmax",
            HeadKind::Evidential => "enn",
            HeadKind::Prototype => "dm",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(HeadKind::Softmax),
            "enn" => Ok(HeadKind::Evidential),
            "dm" => Ok(HeadKind::Prototype),
            other => Err(format!("unknown head kind `{other}` (expected softmax, enn or dm)")),
        }
    }
}

/// Head-specific nodes recorded on a tape by a forward pass.
#[derive(Debug, Clone)]
pub enum HeadNodes {
    Softmax {
        logits: Var,
        probs: Var,
    },
    Evidential(EvidentialHead),
    Prototype {
        latent: Var,
        prototypes: Var,
        logits: Var,
        probs: Var,
    },
}

impl HeadNodes {
    pub fn kind(&self) -> HeadKind {
        match self {
            HeadNodes::Softmax { .. } => HeadKind::Softmax,
            HeadNodes::Evidential(_) => HeadKind::Evidential,
            HeadNodes::Prototype { .. } => HeadKind::Prototype,
        }
    }

    /// Class-probability rows: softmax output or the Dirichlet mean.
    pub fn probs(&self) -> Var {
        match self {
            HeadNodes::Softmax { probs, .. } | HeadNodes::Prototype { probs, .. } => *probs,
            HeadNodes::Evidential(h) => h.probs,
        }
    }

    /// Differentiable per-sample `(confidence, uncertainty)`.
    ///
    /// Evidential heads report `(max p̂, M/S)`; softmax-type heads report
    /// `(max p, 1 − max p)`.
    pub fn confidence_uncertainty(&self, tape: &mut Tape) -> Result<(Var, Var), TensorError> {
        let conf = tape.max_rows(self.probs())?;
        let unc = match self {
            HeadNodes::Evidential(h) => h.uncertainty,
            _ => tape.rsub(1.0, conf),
        };
        Ok((conf, unc))
    }
}

/// One sample's head output, as consumed by [`uncertainty_of`].
#[derive(Debug, Clone, Copy)]
pub enum HeadOutput<'a> {
    Softmax { probs: &'a [f64] },
    Evidential(&'a DirichletOutput),
    Prototype { logits: &'a [f64] },
}

/// `(confidence, uncertainty)` for one sample under the head's rule.
pub fn uncertainty_of(output: HeadOutput<'_>) -> Result<(f64, f64), TensorError> {
    let max = |p: &[f64]| p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match output {
        HeadOutput::Softmax { probs } => {
            let c = max(probs);
            Ok((c, 1.0 - c))
        }
        HeadOutput::Evidential(d) => Ok((max(&d.probs), d.uncertainty)),
        HeadOutput::Prototype { logits } => {
            let p = softmax_rows(&Tensor::matrix(1, logits.len(), logits.to_vec())?)?;
            let c = max(p.data());
            Ok((c, 1.0 - c))
        }
    }
}
