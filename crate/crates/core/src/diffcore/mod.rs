//! Dense tensors, a reverse-mode tape, MLP layers and optimizers.

mod gradcheck;
mod layers;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error, GRAD_REL_FLOOR};
pub use layers::{forward_mlp, Activation, DenseLayer, MlpForward};
pub use optim::{OptimState, OptimizerKind};
pub(crate) use tape::bilinear;
pub use tape::{softmax_rows, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}")]
    BadShape(Vec<usize>),
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    LengthMismatch { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("layer {layer}: expected input width {expected}, got {found}")]
    LayerShape {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("index {index} out of range (< {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("non-finite value produced by {op}{}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    NonFinite { node: Option<usize>, op: &'static str },
    #[error("loss must be scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("node {0} refers to a later node")]
    Cyclic(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("parameter {index}: gradient shape {grad:?} does not match parameter {param:?}")]
    ShapeMismatch {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("expected {expected} parameter tensors, got {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(usize),
    #[error("invalid optimizer setting: {0}")]
    InvalidSetting(String),
}
