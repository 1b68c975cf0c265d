//! Explicit surface extraction from implicit SDFs. One marching-cubes run
//! over a grid of arbitrary per-axis resolution yields an indexed triangle
//! mesh; a cached front end extracts fusion shapes per (subject, resolution)
//! and counts invocations so callers can verify extraction is amortized.

mod fusion_mesh;
mod grid;
mod marching;
mod tables;

pub use fusion_mesh::{
    extract_fusion_mesh, extraction_count, reset_extraction_count, MeshCache,
};
pub use grid::GridSpec;
pub use marching::{marching_cubes, marching_cubes_batch};

/// Errors from surface extraction.
#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite SDF sample at grid point ({0}, {1}, {2})")]
    NonFiniteSample(usize, usize, usize),

    #[error("no surface in box")]
    NoSurfaceInBox,

    #[error(transparent)]
    Fusion(#[from] nsf_fusion::FusionError),

    #[error(transparent)]
    Core(#[from] nsf_core::CoreError),
}

pub type Result<T> = std::result::Result<T, ExtractError>;
