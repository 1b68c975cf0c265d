use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::{CoreError, KnnIndex, Result, Vec3};

/// Unordered oriented point set: every point carries a unit normal.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Per-point RGB in [0,1].
    pub colors: Option<Vec<[f32; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        let cloud = Self {
            points,
            normals,
            colors: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.normals.len() {
            return Err(CoreError::InvalidInput(format!(
                "point/normal count mismatch: {} vs {}",
                self.points.len(),
                self.normals.len()
            )));
        }
        for (i, n) in self.normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-6 {
                return Err(CoreError::InvalidInput(format!(
                    "normal {i} not unit length: |n| = {}",
                    n.norm()
                )));
            }
        }
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(CoreError::InvalidInput(
                    "color count != point count".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-point normals from a covariance plane fit over the k-nearest
/// neighborhood, oriented so that `normal . (viewpoint - point) >= 0`.
///
/// Points whose neighborhood is degenerate (collinear within tolerance) are
/// excluded from the result.
pub fn estimate_normals(points: &[Vec3], viewpoint: Vec3, k: usize) -> Result<PointCloud> {
    if k < 3 {
        return Err(CoreError::InvalidInput(format!("k = {k} < 3")));
    }
    if points.len() < k {
        return Err(CoreError::InvalidInput(format!(
            "need at least k = {k} points, got {}",
            points.len()
        )));
    }
    let index = KnnIndex::build(points.to_vec())?;

    let fitted: Vec<Option<(Vec3, Vec3)>> = points
        .par_iter()
        .map(|p| {
            let hits = index.knn(p, k);
            let mut centroid = Vec3::zeros();
            for &(i, _) in &hits {
                centroid += points[i];
            }
            centroid /= hits.len() as f64;
            let mut cov = Matrix3::<f64>::zeros();
            for &(i, _) in &hits {
                let d = points[i] - centroid;
                cov += d * d.transpose();
            }
            let eig = cov.symmetric_eigen();
            // Smallest-eigenvalue eigenvector is the plane normal.
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let [smallest, middle, largest] = idx;
            // Degenerate (collinear) neighborhood: the two smallest
            // eigenvalues both vanish relative to the spread.
            let spread = eig.eigenvalues[largest].abs();
            if spread <= 0.0 || eig.eigenvalues[middle].abs() / spread < 1e-9 {
                return None;
            }
            let mut n: Vec3 = eig.eigenvectors.column(smallest).into();
            let len = n.norm();
            if len < 1e-12 {
                return None;
            }
            n /= len;
            if n.dot(&(viewpoint - p)) < 0.0 {
                n = -n;
            }
            Some((*p, n))
        })
        .collect();

    let excluded = fitted.iter().filter(|f| f.is_none()).count();
    if excluded > 0 {
        log::warn!("estimate_normals: excluded {excluded} points with degenerate neighborhoods");
    }
    let (points, normals): (Vec<Vec3>, Vec<Vec3>) = fitted.into_iter().flatten().unzip();
    PointCloud::new(points, normals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plane_points_get_plane_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Vec3> = (0..400)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        let cloud = estimate_normals(&points, Vec3::new(0.0, 0.0, 5.0), 16).unwrap();
        assert_eq!(cloud.len(), 400);
        for n in &cloud.normals {
            assert!((n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-3);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vec3> = (0..5000)
            .map(|_| {
                let v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                v.normalize()
            })
            .collect();
        // Viewpoint far outside, so roughly half the sphere faces it; the
        // orientation rule flips the rest. Radial *direction* must match up
        // to sign for >= 99% of points within 5 degrees.
        let cloud = estimate_normals(&points, Vec3::new(0.0, 0.0, 10.0), 16).unwrap();
        let mut good = 0usize;
        for (p, n) in cloud.points.iter().zip(&cloud.normals) {
            let radial = p.normalize();
            let cos = n.dot(&radial).abs().clamp(0.0, 1.0);
            if cos.acos().to_degrees() < 5.0 {
                good += 1;
            }
        }
        assert!(
            good as f64 >= 0.99 * cloud.len() as f64,
            "only {good}/{} within 5 degrees of radial",
            cloud.len()
        );
    }

    #[test]
    fn normals_face_the_viewpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let points: Vec<Vec3> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-0.05..0.05),
                )
            })
            .collect();
        let viewpoint = Vec3::new(0.3, -0.2, 4.0);
        let cloud = estimate_normals(&points, viewpoint, 12).unwrap();
        for (p, n) in cloud.points.iter().zip(&cloud.normals) {
            assert!(n.dot(&(viewpoint - p)) >= 0.0);
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_neighborhood_is_excluded() {
        let points: Vec<Vec3> = (0..32).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let cloud = estimate_normals(&points, Vec3::new(0.0, 0.0, 5.0), 8).unwrap();
        assert!(cloud.is_empty(), "collinear points must all be excluded");
    }

    #[test]
    fn too_few_points_error() {
        let points = vec![Vec3::zeros(), Vec3::x()];
        assert!(estimate_normals(&points, Vec3::z(), 16).is_err());
    }
}
