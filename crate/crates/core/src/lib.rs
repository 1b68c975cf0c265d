//! Geometry kernel shared by the whole pipeline: triangle meshes, oriented
//! point clouds, an exact k-nearest-neighbor index, reconstruction metrics,
//! and OBJ/PLY file I/O.
//!
//! All quantities are metric (meters). Types are immutable after
//! construction and safe to share across threads; the metric operations are
//! pure and parallelize internally over points.

mod cloud;
mod error;
mod geometry;
mod knn;
mod mesh;
mod metrics;

pub mod io;

pub use cloud::{estimate_normals, PointCloud};
pub use error::{CoreError, Result};
pub use geometry::{Aabb, Vec3};
pub use knn::{build_knn_index, KnnIndex};
pub use mesh::TriMesh;
pub use metrics::{chamfer_uni, chamfer_uni_points, iou_voxel, normal_consistency};
