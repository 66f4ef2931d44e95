//! Tape-based reverse-mode automatic differentiation over dense `f64`
//! tensors, with exactly the operations the reconstruction pipeline uses.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION, MAGIC};
pub use params::ParamStore;
pub use tape::{op_set, Gradients, NodeId, OpKind, Tape};
pub use tensor::Tensor;
pub(crate) use tensor::gemm;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported operation `{0}`")]
    UnsupportedOp(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
