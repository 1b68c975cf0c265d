//! Neural surface field for pose-dependent deformation.
//!
//! Features live at the vertices of each subject's fusion mesh and
//! interpolate continuously over the surface through inverse-distance
//! weights on the three nearest basis points. Off-surface queries project
//! onto the fusion SDF zero set first, so the field is defined everywhere
//! near the body. A shared pose-conditioned decoder turns interpolated
//! features into canonical-space displacements; reposing is plain linear
//! blend skinning on top.

mod decoder;
mod features;
mod model;
mod report;

pub use decoder::PoseDecoder;
pub use features::{FeatureQuery, SurfaceFeatures};
pub use model::{DeformResult, NsfModel, SurfaceBinding};
pub use report::{feature_count_report, FeatureCountReport};

/// Feature channels per basis point.
pub const FEATURE_DIM: usize = 64;
/// Width of the pose embedding.
pub const POSE_FEATURE_DIM: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum NsfError {
    #[error("empty mesh")]
    EmptyMesh,

    #[error("need at least 3 basis points, got {0}")]
    TooFewBasisPoints(usize),

    #[error("subject '{0}' has no surface features")]
    MissingFeatures(String),

    #[error("feature dimension mismatch: {0} vs {1}")]
    FeatureDim(usize, usize),

    #[error(transparent)]
    Fusion(#[from] nsf_fusion::FusionError),

    #[error(transparent)]
    Skeleton(#[from] nsf_skeleton::SkeletonError),

    #[error(transparent)]
    Core(#[from] nsf_core::CoreError),

    #[error(transparent)]
    Autodiff(#[from] nsf_autodiff::AutodiffError),
}

pub type Result<T> = std::result::Result<T, NsfError>;
