//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! The graph is built define-by-run on a [`Tape`]: every operation appends a
//! node whose parents already live on the tape, so node ids are a valid
//! topological order and [`Tape::backward`] is a single reverse sweep.

mod cholesky;
mod gradcheck;
mod tape;
mod tensor;

use thiserror::Error;

pub use cholesky::{asymmetry, Cholesky};
pub use gradcheck::{grad_check, grad_check_with_fault, GradCheckReport};
pub use tape::{AdjointFault, BinaryOp, Gradients, OpKind, Tape, UnaryOp, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("division by exact zero in node {node}")]
    DivisionByZero { node: usize },

    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { node: usize, op: &'static str },

    #[error("non-finite adjoint at node {node} ({op})")]
    NonFiniteAdjoint { node: usize, op: &'static str },

    #[error("matrix is not positive definite: pivot {pivot} is {value}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("function is not finite at the probe point")]
    NonFiniteObjective,
}
