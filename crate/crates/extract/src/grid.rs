use nsf_core::{Aabb, Vec3};

use crate::{ExtractError, Result};

/// Sampling lattice for surface extraction: a box and a per-axis cell count.
/// Corner samples run over `(nx+1) x (ny+1) x (nz+1)` lattice points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub bounds: Aabb,
    pub resolution: [usize; 3],
}

impl GridSpec {
    pub fn new(bounds: Aabb, resolution: [usize; 3]) -> Result<Self> {
        if resolution.iter().any(|&r| r < 8) {
            return Err(ExtractError::InvalidGrid(format!(
                "resolution {resolution:?} below minimum 8"
            )));
        }
        let ext = bounds.extents();
        if ext.x <= 0.0 || ext.y <= 0.0 || ext.z <= 0.0 {
            return Err(ExtractError::InvalidGrid("degenerate bounds".into()));
        }
        Ok(Self { bounds, resolution })
    }

    /// Cubic grid: the same cell count along every axis.
    pub fn cubic(bounds: Aabb, resolution: usize) -> Result<Self> {
        Self::new(bounds, [resolution; 3])
    }

    pub fn cell_size(&self) -> Vec3 {
        let ext = self.bounds.extents();
        Vec3::new(
            ext.x / self.resolution[0] as f64,
            ext.y / self.resolution[1] as f64,
            ext.z / self.resolution[2] as f64,
        )
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.cell_size().norm()
    }

    pub fn corner_counts(&self) -> [usize; 3] {
        [
            self.resolution[0] + 1,
            self.resolution[1] + 1,
            self.resolution[2] + 1,
        ]
    }

    pub fn corner_position(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        let cell = self.cell_size();
        self.bounds.min
            + Vec3::new(
                ix as f64 * cell.x,
                iy as f64 * cell.y,
                iz as f64 * cell.z,
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_floor_is_eight() {
        let b = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        assert!(GridSpec::cubic(b, 7).is_err());
        assert!(GridSpec::cubic(b, 8).is_ok());
        assert!(GridSpec::new(b, [8, 64, 16]).is_ok());
    }

    #[test]
    fn corner_positions_span_the_box() {
        let b = Aabb::new(Vec3::new(-1.0, 0.0, 2.0), Vec3::new(1.0, 4.0, 3.0)).unwrap();
        let g = GridSpec::new(b, [10, 8, 16]).unwrap();
        assert_eq!(g.corner_position(0, 0, 0), b.min);
        assert!((g.corner_position(10, 8, 16) - b.max).norm() < 1e-12);
    }
}
