use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use nsf_core::{io, TriMesh};
use nsf_fusion::FusionModel;

use crate::{marching_cubes_batch, ExtractError, GridSpec, Result};

/// Process-wide count of marching-cubes runs over fusion SDFs. The animate
/// path asserts this stays at one per (subject, resolution).
static EXTRACTIONS: AtomicU64 = AtomicU64::new(0);

pub fn extraction_count() -> u64 {
    EXTRACTIONS.load(Ordering::SeqCst)
}

pub fn reset_extraction_count() {
    EXTRACTIONS.store(0, Ordering::SeqCst);
}

/// Runs marching cubes over a subject's fusion SDF and keeps the largest
/// connected component (imperfect SDFs emit floaters). Errors when the box
/// contains no surface.
pub fn extract_fusion_mesh(
    model: &FusionModel,
    subject: &str,
    grid: &GridSpec,
) -> Result<TriMesh> {
    EXTRACTIONS.fetch_add(1, Ordering::SeqCst);
    let mesh = marching_cubes_batch(
        |points| {
            model
                .sdf_batch(subject, points)
                .expect("subject resolved before sampling")
        },
        grid,
    )?;
    if mesh.faces.is_empty() {
        return Err(ExtractError::NoSurfaceInBox);
    }
    let mut components = mesh.connected_components();
    let kept = components.remove(0);
    if !components.is_empty() {
        log::info!(
            "extract_fusion_mesh: kept largest component ({} verts), dropped {} floaters",
            kept.vertices.len(),
            components.len()
        );
    }
    Ok(kept)
}

/// Disk cache over [`extract_fusion_mesh`] with the layout
/// `<root>/<subject>/fusion_r<res>.ply`. Cache hits bypass extraction
/// entirely (the instrumented counter does not move).
#[derive(Debug, Clone)]
pub struct MeshCache {
    root: PathBuf,
}

impl MeshCache {
    pub fn new(root: impl AsRef<Path>) -> Self {
        Self {
            root: root.as_ref().to_path_buf(),
        }
    }

    pub fn path_for(&self, subject: &str, grid: &GridSpec) -> PathBuf {
        self.root
            .join(subject)
            .join(format!("fusion_r{}.ply", grid.resolution[0]))
    }

    pub fn fusion_mesh(
        &self,
        model: &FusionModel,
        subject: &str,
        grid: &GridSpec,
    ) -> Result<TriMesh> {
        let path = self.path_for(subject, grid);
        if path.exists() {
            return Ok(io::load_mesh_ply(&path)?);
        }
        let mesh = extract_fusion_mesh(model, subject, grid)?;
        std::fs::create_dir_all(path.parent().expect("cache path has parent"))
            .map_err(nsf_core::CoreError::Io)?;
        io::save_mesh_ply(&mesh, &path)?;
        Ok(mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nsf_core::{Aabb, Vec3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The untrained geometric-initialized model doubles as a sphere SDF.
    fn sphere_model() -> FusionModel {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut model = FusionModel::new(&mut rng);
        model.register_subject("s0", &mut rng).unwrap();
        model
    }

    fn box_grid(res: usize) -> GridSpec {
        GridSpec::cubic(
            Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap(),
            res,
        )
        .unwrap()
    }

    #[test]
    fn fusion_mesh_is_single_watertight_component() {
        let model = sphere_model();
        let mesh = extract_fusion_mesh(&model, "s0", &box_grid(48)).unwrap();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.connected_components().len(), 1);
    }

    #[test]
    fn same_checkpoint_extracts_at_multiple_resolutions() {
        let model = sphere_model();
        let checksum_before = model.decoder.checksum();
        let coarse = extract_fusion_mesh(&model, "s0", &box_grid(32)).unwrap();
        let fine = extract_fusion_mesh(&model, "s0", &box_grid(64)).unwrap();
        assert!(fine.vertices.len() > coarse.vertices.len());
        assert_eq!(model.decoder.checksum(), checksum_before);
    }

    #[test]
    fn empty_box_is_an_error() {
        let model = sphere_model();
        let far = GridSpec::cubic(
            Aabb::new(Vec3::repeat(5.0), Vec3::repeat(6.0)).unwrap(),
            16,
        )
        .unwrap();
        assert!(matches!(
            extract_fusion_mesh(&model, "s0", &far),
            Err(ExtractError::NoSurfaceInBox)
        ));
    }

    #[test]
    fn cache_extracts_once_then_reloads() {
        let model = sphere_model();
        let dir = tempfile::tempdir().unwrap();
        let cache = MeshCache::new(dir.path());
        let grid = box_grid(24);

        reset_extraction_count();
        let first = cache.fusion_mesh(&model, "s0", &grid).unwrap();
        assert_eq!(extraction_count(), 1);
        assert!(cache.path_for("s0", &grid).exists());

        let second = cache.fusion_mesh(&model, "s0", &grid).unwrap();
        assert_eq!(extraction_count(), 1, "cache hit must not re-extract");
        assert_eq!(first.faces, second.faces);
        assert_eq!(first.vertices.len(), second.vertices.len());
    }
}
