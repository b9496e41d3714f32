//! Dense `f64` tensors with reverse-mode differentiation, Adam, a Jacobi SVD and
//! a binary checkpoint container.

pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
pub mod rng;
pub mod svd;
pub mod tape;
pub mod tensor;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use optim::{Adam, AdamConfig};
pub use svd::{svd, Svd};
pub use tape::{Gradients, Param, ParamGrads, ParamId, ParamStore, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{0}: non-finite input")]
    NonFiniteInput(&'static str),
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("svd did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("parameter {0:?} already exists")]
    DuplicateParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
