use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer, `y = act(x Wᵀ + b)` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self, TensorError> {
        if !weight.is_matrix() || bias.shape() != [weight.rows()] {
            return Err(TensorError::ShapeMismatch {
                op: "dense_layer",
                left: weight.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    /// He-normal weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        let w = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        Self {
            weight: Tensor::matrix(outputs, inputs, w).expect("shape"),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    /// Records `act(x Wᵀ + b)` given already-bound weight and bias nodes.
    pub fn apply(tape: &mut Tape, weight: Var, bias: Var, activation: Activation, x: Var) -> Result<Var, TensorError> {
        let z = tape.matmul_t(x, weight)?;
        let z = tape.add_row(z, bias)?;
        Ok(match activation {
            Activation::Relu => tape.relu(z),
            Activation::Identity => z,
        })
    }
}

/// Output of [`forward_mlp`]: the final activation and the parameter leaves
/// bound for each layer as `(weight, bias)`.
#[derive(Debug, Clone)]
pub struct MlpForward {
    pub output: Var,
    pub params: Vec<(Var, Var)>,
}

/// Binds every layer's parameters onto `tape` and records the forward pass.
pub fn forward_mlp(tape: &mut Tape, layers: &[DenseLayer], batch: Var) -> Result<MlpForward, TensorError> {
    let mut x = batch;
    let mut params = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let width = tape.value(x).cols();
        if !tape.value(x).is_matrix() || width != layer.inputs() {
            return Err(TensorError::LayerShape {
                layer: i,
                expected: layer.inputs(),
                found: width,
            });
        }
        let w = tape.param(layer.weight.clone());
        let b = tape.param(layer.bias.clone());
        x = DenseLayer::apply(tape, w, b, layer.activation, x)?;
        params.push((w, b));
    }
    Ok(MlpForward { output: x, params })
}
