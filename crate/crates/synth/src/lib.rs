//! Synthetic ground-truth generator: a parametric capsule body with known
//! skeleton and skinning, a procedural pose-dependent bulge deformation the
//! surface field has to learn, and a monocular depth renderer with
//! Kinect-like intrinsics. Stands in for real depth-sensor captures at desk
//! scale.

mod body;
mod camera;
mod dataset;
mod deform;
mod poses;
mod render;

pub use body::{build_toy_body, ToyBody, ToyBodySpec};
pub use camera::Camera;
pub use dataset::{write_dataset, DatasetSpec, SubjectSpec};
pub use deform::apply_procedural_deformation;
pub use poses::generate_pose_sequence;
pub use render::{render_depth_sequence, render_mesh_depth, RenderOptions, RenderedFrame};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid body spec: {0}")]
    InvalidSpec(String),

    #[error("non-manifold capsule union: {0}")]
    NonManifold(String),

    #[error("body fully out of frustum")]
    OutOfFrustum,

    #[error(transparent)]
    Core(#[from] nsf_core::CoreError),

    #[error(transparent)]
    Skeleton(#[from] nsf_skeleton::SkeletonError),

    #[error(transparent)]
    Extract(#[from] nsf_extract::ExtractError),

    #[error(transparent)]
    Autodiff(#[from] nsf_autodiff::AutodiffError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;
