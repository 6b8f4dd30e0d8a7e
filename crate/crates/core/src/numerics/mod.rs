//! Dense `f64` tensors, a reverse-mode gradient tape, parameter storage with
//! initializers, AdamW, finite-difference gradient checks and checkpoints.

pub mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, restore_into, write_checkpoint, CheckpointError};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};
pub use params::{normal, xavier_uniform, Gradients, ParamId, ParamStore};
pub use tape::{sigmoid, softmax_rows, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("{len} values do not fill shape {shape:?}")]
    BadLength { shape: [usize; 2], len: usize },
    #[error("index {index} out of range {bound} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: [usize; 2] },
    #[error("dropout rate {0} outside [0, 1)")]
    BadDropoutRate(f64),
    #[error("expected {expected} parameters, found {found}")]
    ParamCountMismatch { expected: usize, found: usize },
}
