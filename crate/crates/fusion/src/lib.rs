//! Fusion shape: a subject's coarse canonical surface as the zero set of a
//! latent-conditioned SDF, trained in an auto-decoder regime from
//! canonicalized partial observations. Also provides SDF evaluation, spatial
//! gradients, and Newton projection onto the zero set.

mod loss;
mod model;
mod project;
mod train;

pub use loss::{fusion_loss, FusionBatch, FusionLossTerms};
pub use model::{FusionModel, SubjectCode, LATENT_DIM};
pub use project::{project_batch, project_to_surface, ProjectionParams};
pub use train::{train_fusion, FusionDataset, FusionTrainConfig, SubjectFrames, TrainStats};

/// Errors from the fusion-shape layer.
#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("unknown subject '{0}'")]
    UnknownSubject(String),

    #[error("subject '{0}' already registered")]
    DuplicateSubject(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("degenerate gradient")]
    DegenerateGradient,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Autodiff(#[from] nsf_autodiff::AutodiffError),

    #[error(transparent)]
    Core(#[from] nsf_core::CoreError),
}

pub type Result<T> = std::result::Result<T, FusionError>;
