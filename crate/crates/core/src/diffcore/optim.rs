use super::{OptimError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
///
/// For [`OptimizerKind::SgdMomentum`] the `first` buffers hold the velocity;
/// `second` stays empty.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl OptimState {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum: 0.0,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        }
    }

    pub fn sgd_momentum(lr: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            momentum,
            ..Self::adam(lr)
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: &str| Err(OptimError::InvalidSetting(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.momentum >= 0.0 && self.momentum.is_finite()) {
            return bad("momentum must be nonnegative");
        }
        Ok(())
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite
    /// or mis-shaped.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), OptimError> {
        if params.len() != grads.len() {
            return Err(OptimError::CountMismatch {
                expected: params.len(),
                found: grads.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(OptimError::ShapeMismatch {
                    index: i,
                    param: p.shape().to_vec(),
                    grad: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(OptimError::NonFiniteGradient(i));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            if self.kind == OptimizerKind::Adam {
                self.second = self.first.clone();
            }
        } else if self.first.len() != params.len() {
            return Err(OptimError::CountMismatch {
                expected: self.first.len(),
                found: params.len(),
            });
        }
        self.step += 1;

        match self.kind {
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for (k, p) in params.iter_mut().enumerate() {
                    let g = grads[k].data();
                    let m = self.first[k].data_mut();
                    let v = self.second[k].data_mut();
                    for (j, x) in p.data_mut().iter_mut().enumerate() {
                        m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                        v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                        let mhat = m[j] / c1;
                        let vhat = v[j] / c2;
                        *x -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
                    }
                }
            }
            OptimizerKind::SgdMomentum => {
                for (k, p) in params.iter_mut().enumerate() {
                    let g = grads[k].data();
                    let vel = self.first[k].data_mut();
                    for (j, x) in p.data_mut().iter_mut().enumerate() {
                        vel[j] = self.momentum * vel[j] - self.lr * g[j];
                        *x += vel[j];
                    }
                }
            }
        }
        Ok(())
    }
}
