use rayon::prelude::*;

use crate::{CoreError, KnnIndex, PointCloud, Result, TriMesh, Vec3};

/// Uni-directional Chamfer distance: mean over `from` of the distance to the
/// nearest point in `to`. Meters.
pub fn chamfer_uni(from: &PointCloud, to: &PointCloud) -> Result<f64> {
    chamfer_uni_points(&from.points, &to.points)
}

/// Point-slice variant of [`chamfer_uni`].
pub fn chamfer_uni_points(from: &[Vec3], to: &[Vec3]) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(CoreError::EmptyPointSet);
    }
    let index = KnnIndex::build(to.to_vec())?;
    let dists: Vec<f64> = from.par_iter().map(|p| index.nearest(p).1).collect();
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}

/// Symmetric mean of nearest-neighbor normal cosines, in [-1, 1].
pub fn normal_consistency(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::EmptyPointSet);
    }
    if a.normals.len() != a.points.len() || b.normals.len() != b.points.len() {
        return Err(CoreError::MissingNormals);
    }
    Ok((directed_nc(a, b)? + directed_nc(b, a)?) * 0.5)
}

fn directed_nc(from: &PointCloud, to: &PointCloud) -> Result<f64> {
    let index = KnnIndex::build(to.points.clone())?;
    let cosines: Vec<f64> = from
        .points
        .par_iter()
        .zip(from.normals.par_iter())
        .map(|(p, n)| {
            let (j, _) = index.nearest(p);
            n.dot(&to.normals[j]).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(cosines.iter().sum::<f64>() / cosines.len() as f64)
}

/// Volumetric intersection-over-union of two watertight meshes, computed on
/// an occupancy grid over their joint bounding box. Occupancy comes from
/// parity ray casting along +x; rays are jittered inside their cells to dodge
/// edge-on hits.
pub fn iou_voxel(a: &TriMesh, b: &TriMesh, resolution: usize) -> Result<f64> {
    if resolution < 8 {
        return Err(CoreError::InvalidInput(format!(
            "resolution {resolution} < 8"
        )));
    }
    if !a.is_watertight() || !b.is_watertight() {
        return Err(CoreError::OpenMesh);
    }
    let box_a = a.bounding_box().ok_or(CoreError::EmptyPointSet)?;
    let box_b = b.bounding_box().ok_or(CoreError::EmptyPointSet)?;
    let joint = box_a.union(&box_b);
    let joint = joint.padded(1e-6 + joint.extents().norm() * 1e-6);

    let occ_a = voxel_occupancy(a, &joint, resolution);
    let occ_b = voxel_occupancy(b, &joint, resolution);

    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in occ_a.iter().zip(&occ_b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        log::warn!("iou_voxel: neither mesh occupies any voxel at resolution {resolution}");
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Occupancy at voxel centers by +x parity ray casting, one jittered ray per
/// (y, z) row. Indexing: `ix + res * (iy + res * iz)`.
pub(crate) fn voxel_occupancy(mesh: &TriMesh, bounds: &crate::Aabb, res: usize) -> Vec<bool> {
    let ext = bounds.extents();
    let cell = Vec3::new(ext.x / res as f64, ext.y / res as f64, ext.z / res as f64);

    // Bucket triangles by the (y, z) ray rows their bounding box can touch.
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); res * res];
    for (t, f) in mesh.faces.iter().enumerate() {
        let (p0, p1, p2) = (
            mesh.vertices[f[0] as usize],
            mesh.vertices[f[1] as usize],
            mesh.vertices[f[2] as usize],
        );
        let min = p0.inf(&p1).inf(&p2);
        let max = p0.sup(&p1).sup(&p2);
        let lo_y = (((min.y - bounds.min.y) / cell.y).floor() as i64 - 1).max(0) as usize;
        let hi_y = (((max.y - bounds.min.y) / cell.y).ceil() as i64 + 1).min(res as i64 - 1);
        let lo_z = (((min.z - bounds.min.z) / cell.z).floor() as i64 - 1).max(0) as usize;
        let hi_z = (((max.z - bounds.min.z) / cell.z).ceil() as i64 + 1).min(res as i64 - 1);
        if hi_y < 0 || hi_z < 0 {
            continue;
        }
        for iz in lo_z..=hi_z as usize {
            for iy in lo_y..=hi_y as usize {
                buckets[iy + res * iz].push(t as u32);
            }
        }
    }

    let rows: Vec<Vec<bool>> = (0..res * res)
        .into_par_iter()
        .map(|row| {
            let iy = row % res;
            let iz = row / res;
            // Deterministic sub-cell jitter from the row id.
            let (jy, jz) = jitter(iy as u64, iz as u64);
            let y = bounds.min.y + (iy as f64 + 0.5 + jy) * cell.y;
            let z = bounds.min.z + (iz as f64 + 0.5 + jz) * cell.z;
            let origin = Vec3::new(bounds.min.x - 1.0, y, z);

            let mut hits: Vec<f64> = buckets[row]
                .iter()
                .filter_map(|&t| {
                    let f = mesh.faces[t as usize];
                    ray_triangle_x(
                        &origin,
                        &mesh.vertices[f[0] as usize],
                        &mesh.vertices[f[1] as usize],
                        &mesh.vertices[f[2] as usize],
                    )
                })
                .collect();
            hits.sort_by(|p, q| p.total_cmp(q));

            let mut out = vec![false; res];
            for (ix, slot) in out.iter_mut().enumerate() {
                let x = bounds.min.x + (ix as f64 + 0.5) * cell.x;
                let crossings = hits.partition_point(|&h| h < x - origin.x);
                *slot = crossings % 2 == 1;
            }
            out
        })
        .collect();

    let mut occ = vec![false; res * res * res];
    for (row, vals) in rows.into_iter().enumerate() {
        let iy = row % res;
        let iz = row / res;
        for (ix, v) in vals.into_iter().enumerate() {
            occ[ix + res * (iy + res * iz)] = v;
        }
    }
    occ
}

/// Möller–Trumbore specialized to direction (1, 0, 0); returns ray parameter.
fn ray_triangle_x(origin: &Vec3, v0: &Vec3, v1: &Vec3, v2: &Vec3) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    // p = dir x e2 with dir = (1,0,0)
    let p = Vec3::new(0.0, -e2.z, e2.y);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    // v = dir . q
    let v = q.x * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

fn jitter(a: u64, b: u64) -> (f64, f64) {
    // splitmix64-style hash; maps into (-0.3, 0.3) sub-cell offsets.
    let mut x = a.wrapping_mul(0x9E3779B97F4A7C15) ^ b.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58476D1CE4E5B9);
    x ^= x >> 27;
    let jy = ((x & 0xFFFF_FFFF) as f64 / u32::MAX as f64 - 0.5) * 0.6;
    let jz = (((x >> 32) & 0xFFFF_FFFF) as f64 / u32::MAX as f64 - 0.5) * 0.6;
    (jy, jz)
}
