use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::{Tape, Tensor, TensorError, Var};

/// One prototype row per class, `[M, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub prototypes: Tensor,
}

impl PrototypeSet {
    pub fn new(prototypes: Tensor) -> Result<Self, TensorError> {
        if !prototypes.is_matrix() || !prototypes.all_finite() {
            return Err(TensorError::BadShape(prototypes.shape().to_vec()));
        }
        Ok(Self { prototypes })
    }

    /// Standard normal entries scaled by `1/√dim`.
    pub fn init<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        let data = (0..classes * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                s * z
            })
            .collect::<Vec<f64>>();
        Self {
            prototypes: Tensor::matrix(classes, dim, data).expect("shape"),
        }
    }

    pub fn classes(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }
}

/// `logit[i, c] = −‖z_i − p_c‖₂`
pub fn dm_layer(tape: &mut Tape, latent: Var, prototypes: Var) -> Result<Var, TensorError> {
    let d2 = tape.sq_dist(latent, prototypes)?;
    let d = tape.sqrt(d2);
    Ok(tape.scale(d, -1.0))
}
