//! MLP backbone plus one of the three heads, with optional spectral
//! normalization of the hidden layers.

use rand::Rng;

use crate::diffcore::{Activation, DenseLayer, Tape, Tensor, TensorError, Var};
use crate::dum::{
    dm_layer, evidence_head, DirichletOutput, HeadKind, HeadNodes, PrototypeSet, SpectralNorm, SpectralNormError,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSpec {
    pub coeff: f64,
    /// Power-iteration steps per training step.
    pub iterations: usize,
}

/// Architecture of a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub head: HeadKind,
    pub spectral: Option<SpectralSpec>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.input_dim == 0 {
            return Err("input dimension must be positive".into());
        }
        if self.classes < 2 {
            return Err(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err("hidden widths must be positive".into());
        }
        if let Some(sn) = &self.spectral {
            if !(sn.coeff > 0.0) {
                return Err(format!("sn_coeff must be positive, got {}", sn.coeff));
            }
            if sn.iterations == 0 {
                return Err("sn_iterations must be at least 1".into());
            }
            if self.hidden.is_empty() {
                return Err("spectral normalization needs at least one hidden layer".into());
            }
        }
        Ok(())
    }

    /// Width fed into the output layer.
    pub fn latent_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Output {
    Linear(DenseLayer),
    Prototypes(PrototypeSet),
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Spec(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Spectral(#[from] SpectralNormError),
    #[error("expected {expected} parameter tensors, got {found}")]
    ParamCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    hidden: Vec<DenseLayer>,
    spectral: Vec<SpectralNorm>,
    output: Output,
}

/// Nodes recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct Forward {
    pub head: HeadNodes,
    /// Parameter leaves in [`Network::parameters`] order.
    pub params: Vec<Var>,
    /// Inputs to every ReLU: hidden pre-activations, then the evidential
    /// logits when that head is used.
    pub relu_inputs: Vec<Var>,
}

/// One sample's prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub confidence: f64,
    pub uncertainty: f64,
}

impl Network {
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self, ModelError> {
        spec.validate().map_err(ModelError::Spec)?;
        let mut hidden = Vec::with_capacity(spec.hidden.len());
        let mut width = spec.input_dim;
        for &h in &spec.hidden {
            hidden.push(DenseLayer::init(width, h, Activation::Relu, rng));
            width = h;
        }
        let output = match spec.head {
            HeadKind::Prototype => Output::Prototypes(PrototypeSet::init(spec.classes, width, rng)),
            _ => Output::Linear(DenseLayer::init(width, spec.classes, Activation::Identity, rng)),
        };
        let mut spectral = Vec::new();
        if let Some(sn) = &spec.spectral {
            for layer in &hidden {
                let mut state = SpectralNorm::new(sn.coeff, sn.iterations, layer.outputs(), layer.inputs(), rng)?;
                state.update(&layer.weight)?;
                spectral.push(state);
            }
        }
        Ok(Self {
            spec,
            hidden,
            spectral,
            output,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.hidden.iter().flat_map(|l| [&l.weight, &l.bias]).collect();
        match &self.output {
            Output::Linear(l) => out.extend([&l.weight, &l.bias]),
            Output::Prototypes(p) => out.push(&p.prototypes),
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .hidden
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect();
        match &mut self.output {
            Output::Linear(l) => out.extend([&mut l.weight, &mut l.bias]),
            Output::Prototypes(p) => out.push(&mut p.prototypes),
        }
        out
    }

    /// Replaces every parameter; shapes must match.
    pub fn set_parameters(&mut self, values: &[Tensor]) -> Result<(), ModelError> {
        let mut slots = self.parameters_mut();
        if slots.len() != values.len() {
            return Err(ModelError::ParamCount {
                expected: slots.len(),
                found: values.len(),
            });
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(TensorError::BadShape(v.shape().to_vec()).into());
            }
            **slot = v.clone();
        }
        Ok(())
    }

    /// One power-iteration step per spectrally normalized layer.
    pub fn refresh_spectral(&mut self) -> Result<(), ModelError> {
        for (state, layer) in self.spectral.iter_mut().zip(&self.hidden) {
            state.update(&layer.weight)?;
        }
        Ok(())
    }

    /// Estimated `σ / coeff` per spectrally normalized layer. A layer is
    /// rescaled when its ratio exceeds 1.
    pub fn spectral_ratios(&self) -> Vec<f64> {
        self.spectral
            .iter()
            .zip(&self.hidden)
            .map(|(sn, l)| sn.sigma(&l.weight) / sn.coeff())
            .collect()
    }

    /// Weights actually used in the forward pass (spectrally normalized where
    /// configured).
    pub fn effective_hidden_weights(&self) -> Vec<Tensor> {
        self.hidden
            .iter()
            .enumerate()
            .map(|(i, l)| match self.spectral.get(i) {
                Some(sn) => sn.apply(&l.weight),
                None => l.weight.clone(),
            })
            .collect()
    }

    /// Records the forward pass for a `[n, input_dim]` batch.
    pub fn forward(&self, tape: &mut Tape, batch: Var) -> Result<Forward, ModelError> {
        let mut x = batch;
        let mut params = Vec::new();
        let mut relu_inputs = Vec::new();
        for (i, layer) in self.hidden.iter().enumerate() {
            let width = tape.value(x).cols();
            if width != layer.inputs() {
                return Err(TensorError::LayerShape {
                    layer: i,
                    expected: layer.inputs(),
                    found: width,
                }
                .into());
            }
            let w = tape.param(layer.weight.clone());
            let b = tape.param(layer.bias.clone());
            params.extend([w, b]);
            let w_eff = match self.spectral.get(i) {
                Some(sn) => tape.spectral_scale(w, sn.left(), sn.right(), sn.coeff())?,
                None => w,
            };
            let z = DenseLayer::apply(tape, w_eff, b, Activation::Identity, x)?;
            relu_inputs.push(z);
            x = tape.relu(z);
        }
        let head = match &self.output {
            Output::Linear(layer) => {
                let w = tape.param(layer.weight.clone());
                let b = tape.param(layer.bias.clone());
                params.extend([w, b]);
                let logits = DenseLayer::apply(tape, w, b, Activation::Identity, x)?;
                if self.spec.head == HeadKind::Evidential {
                    relu_inputs.push(logits);
                    HeadNodes::Evidential(evidence_head(tape, logits, self.spec.classes)?)
                } else {
                    let probs = tape.softmax(logits)?;
                    HeadNodes::Softmax { logits, probs }
                }
            }
            Output::Prototypes(set) => {
                let p = tape.param(set.prototypes.clone());
                params.push(p);
                let logits = dm_layer(tape, x, p)?;
                let probs = tape.softmax(logits)?;
                HeadNodes::Prototype {
                    latent: x,
                    prototypes: p,
                    logits,
                    probs,
                }
            }
        };
        Ok(Forward {
            head,
            params,
            relu_inputs,
        })
    }

    /// Class probabilities, confidence and uncertainty for every row.
    pub fn predict(&self, inputs: &Tensor) -> Result<Vec<Prediction>, ModelError> {
        let mut tape = Tape::new();
        let x = tape.constant(inputs.clone());
        let fwd = self.forward(&mut tape, x)?;
        let probs = tape.value(fwd.head.probs()).clone();
        let unc = match &fwd.head {
            HeadNodes::Evidential(h) => Some(tape.value(h.uncertainty).clone()),
            _ => None,
        };
        let logits = match &fwd.head {
            HeadNodes::Evidential(h) => Some(tape.value(h.evidence).clone()),
            _ => None,
        };
        Ok((0..probs.rows())
            .map(|i| {
                let p = probs.row(i).to_vec();
                let conf = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let uncertainty = match (&unc, &logits) {
                    (Some(u), Some(e)) => {
                        debug_assert_eq!(DirichletOutput::from_evidence(e.row(i)).uncertainty, u.data()[i]);
                        u.data()[i]
                    }
                    _ => 1.0 - conf,
                };
                Prediction {
                    probs: p,
                    confidence: conf,
                    uncertainty,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(head: HeadKind, spectral: bool) -> ModelSpec {
        ModelSpec {
            input_dim: 2,
            hidden: vec![6, 5],
            classes: 3,
            head,
            spectral: spectral.then_some(SpectralSpec {
                coeff: 0.8,
                iterations: 1,
            }),
        }
    }

    #[test]
    fn predictions_lie_on_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::from_rows(&[vec![0.1, 2.0], vec![-1.0, 0.3]]).unwrap();
        for head in [HeadKind::Softmax, HeadKind::Evidential, HeadKind::Prototype] {
            let net = Network::init(spec(head, head == HeadKind::Softmax), &mut rng).unwrap();
            for p in net.predict(&x).unwrap() {
                assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p.confidence >= 1.0 / 3.0 - 1e-12 && p.uncertainty >= 0.0 && p.uncertainty <= 1.0);
            }
        }
    }

    #[test]
    fn parameter_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Network::init(spec(HeadKind::Prototype, false), &mut rng).unwrap();
        let params: Vec<Tensor> = net.parameters().into_iter().cloned().collect();
        assert_eq!(params.len(), 5);
        let bumped: Vec<Tensor> = params.iter().map(|t| t.map(|v| v + 1.0)).collect();
        net.set_parameters(&bumped).unwrap();
        assert_eq!(net.parameters()[4], &bumped[4]);
        assert!(net.set_parameters(&bumped[..2]).is_err());
    }

    #[test]
    fn spectral_layers_respect_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Network::init(spec(HeadKind::Softmax, true), &mut rng).unwrap();
        for p in net.parameters_mut() {
            *p = p.map(|v| v * 10.0);
        }
        for _ in 0..50 {
            net.refresh_spectral().unwrap();
        }
        for w in net.effective_hidden_weights() {
            let sigma = crate::dum::SpectralNorm::new(1.0, 1, w.rows(), w.cols(), &mut rng)
                .and_then(|mut s| s.update(&w))
                .unwrap();
            assert!(sigma <= 0.8 * 1.001, "{sigma}");
        }
    }

    #[test]
    fn spectral_needs_hidden_layer() {
        let mut s = spec(HeadKind::Softmax, true);
        s.hidden.clear();
        assert!(s.validate().is_err());
    }
}
