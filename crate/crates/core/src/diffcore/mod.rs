//! Dense `f64` tensors with tape-based reverse-mode differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use tape::{stable_sigmoid, BatchStats, Gradients, NormMode, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not match {len} values")]
    Length { shape: Vec<usize>, len: usize },
    #[error("unsupported rank {got}")]
    Rank { got: usize },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("value is not connected to a trainable input on this tape")]
    Detached,
    #[error("tape already replayed; reset it before the next backward pass")]
    AlreadyBackpropagated,
    #[error("non-finite value produced by `{op}` during {stage}")]
    NonFinite {
        op: &'static str,
        stage: &'static str,
    },
}
