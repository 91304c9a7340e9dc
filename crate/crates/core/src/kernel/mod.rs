//! Dense matrices, layers with hand-written backward passes, Adam, the
//! `APRM` checkpoint container and a finite-difference gradient checker.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod matrix;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{Checkpoint, APRM_MAGIC, APRM_VERSION};
pub use gradcheck::{grad_check, GradCheck};
pub use layers::{
    affine_forward, glorot_uniform, relu, relu_backward, sigmoid, softmax, softmax_backward, tanh, tanh_backward,
    Affine, BatchNorm, BatchNormCache, ParamTensor, BN_EPSILON, BN_MOMENTUM,
};
pub use matrix::{gemm, Matrix, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("batch normalization in train mode needs at least {needed} rows, got {got}")]
    BatchSize { needed: usize, got: usize },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint byte {offset}: {message}")]
    CheckpointFormat { offset: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}
