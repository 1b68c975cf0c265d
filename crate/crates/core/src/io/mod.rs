//! Mesh and point-cloud file I/O.
//!
//! Two formats are supported, both versioned by this module:
//!
//! * **OBJ** — ASCII, triangles only (`v` / `f` lines). Quads are rejected.
//! * **PLY** — `binary_little_endian 1.0`. Vertex properties, in order:
//!   `float x,y,z`, then `float nx,ny,nz` when normals are present, then
//!   `uchar red,green,blue` when colors are present. Meshes add a face
//!   element with `property list uchar int vertex_indices`.
//!
//! Save→load round trips are lossless to f32 precision (colors to 8-bit).

mod obj;
mod ply;

pub use obj::{load_mesh_obj, save_mesh_obj};
pub use ply::{load_cloud_ply, load_mesh_ply, save_cloud_ply, save_mesh_ply};
