//! Articulated body model: skeleton with forward kinematics, linear blend
//! skinning, a kNN-diffused skinning-weight field, and canonicalization of
//! posed observations by damped iterative root finding.

mod canonicalize;
mod json;
mod lbs;
mod rig;
mod skinning;

pub use canonicalize::{canonicalize, CanonicalizeParams, Canonicalized};
pub use json::{load_motion, save_motion, MotionDoc};
pub use lbs::{blend_transforms, lbs_forward, pose_normal, unpose_normal};
pub use rig::{forward_kinematics, posed_joint_positions, JointTransforms, Pose, Skeleton};
pub use skinning::SkinningField;

/// Errors from the articulation layer.
#[derive(Debug, thiserror::Error)]
pub enum SkeletonError {
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("weight vector length {0} != joint count {1}")]
    WeightLength(usize, usize),

    #[error("invalid skinning field: {0}")]
    InvalidField(String),

    #[error(transparent)]
    Core(#[from] nsf_core::CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("motion file parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SkeletonError>;
