//! Minimal reverse-mode automatic differentiation for the trainable parts of
//! the pipeline: dense rank-<=2 f32 tensors, an eager computation graph with
//! a reverse sweep, MLPs with an explicitly built input-gradient graph, an
//! Adam optimizer, finite-difference gradient checking, and the `NSF1`
//! checkpoint container.
//!
//! Graph construction and backward are single-threaded per training step;
//! large matrix products parallelize internally over rows, which keeps every
//! result bit-reproducible regardless of thread count.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
mod mlp;
mod tensor;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use gradcheck::grad_check;
pub use graph::{Graph, NodeId};
pub use mlp::{Activation, Layer, Mlp, MlpBinding};
pub use tensor::{matmul, Tensor};

/// Errors produced by the autodiff engine.
#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch: ({0}, {1}) vs ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),

    #[error("backward requires a scalar output, got ({0}, {1})")]
    NonScalarOutput(usize, usize),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
