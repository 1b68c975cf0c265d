use std::collections::HashMap;

use rayon::prelude::*;

use nsf_core::{TriMesh, Vec3};

use crate::tables::{EDGE_TABLE, TRIANGLE_TABLE};
use crate::{ExtractError, GridSpec, Result};

/// Cube corner offsets in table order.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Cube edges as (corner, corner) pairs in table order.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Canonical (lower corner offset, axis) key per cube edge, shared between
/// adjacent cubes so interpolated vertices deduplicate exactly.
const EDGE_KEYS: [([usize; 3], usize); 12] = [
    ([0, 0, 0], 0),
    ([1, 0, 0], 1),
    ([0, 1, 0], 0),
    ([0, 0, 0], 1),
    ([0, 0, 1], 0),
    ([1, 0, 1], 1),
    ([0, 1, 1], 0),
    ([0, 0, 1], 1),
    ([0, 0, 0], 2),
    ([1, 0, 0], 2),
    ([1, 1, 0], 2),
    ([0, 1, 0], 2),
];

/// Extracts the zero level set of a scalar field with the classic 256-case
/// marching cubes. Vertices interpolate linearly along sign-changing edges;
/// triangles wind consistently with outward orientation toward positive
/// field values. A field without sign change yields an empty mesh.
pub fn marching_cubes<F>(sampler: F, grid: &GridSpec) -> Result<TriMesh>
where
    F: Fn(&Vec3) -> f64 + Sync,
{
    marching_cubes_batch(
        |points: &[Vec3]| points.par_iter().map(|p| sampler(p)).collect(),
        grid,
    )
}

/// Batched-sampler variant of [`marching_cubes`]; the sampler receives whole
/// chunks of lattice points at once.
pub fn marching_cubes_batch<F>(sampler: F, grid: &GridSpec) -> Result<TriMesh>
where
    F: Fn(&[Vec3]) -> Vec<f64>,
{
    let [cx, cy, cz] = grid.corner_counts();
    let corner_total = cx * cy * cz;
    let lattice_index = |ix: usize, iy: usize, iz: usize| ix + cx * (iy + cy * iz);

    // Sample the full lattice in chunks.
    const CHUNK: usize = 16384;
    let mut values = vec![0.0f64; corner_total];
    let mut buffer = Vec::with_capacity(CHUNK);
    let mut base = 0usize;
    for iz in 0..cz {
        for iy in 0..cy {
            for ix in 0..cx {
                buffer.push(grid.corner_position(ix, iy, iz));
                if buffer.len() == CHUNK {
                    values[base..base + CHUNK].copy_from_slice(&sampler(&buffer));
                    base += CHUNK;
                    buffer.clear();
                }
            }
        }
    }
    if !buffer.is_empty() {
        values[base..base + buffer.len()].copy_from_slice(&sampler(&buffer));
    }

    // Exact zeros get nudged off the level set so no interpolated vertex can
    // coincide with a lattice point (which would make degenerate triangles).
    let nudge = 1e-12 * grid.cell_diagonal().max(1e-6);
    for (i, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            let ix = i % cx;
            let iy = (i / cx) % cy;
            let iz = i / (cx * cy);
            return Err(ExtractError::NonFiniteSample(ix, iy, iz));
        }
        if *v == 0.0 {
            *v = nudge;
        }
    }

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();

    let [nx, ny, nz] = grid.resolution;
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let corner_vals: [f64; 8] = std::array::from_fn(|c| {
                    let [ox, oy, oz] = CORNERS[c];
                    values[lattice_index(ix + ox, iy + oy, iz + oz)]
                });
                let mut cube_index = 0usize;
                for (c, &v) in corner_vals.iter().enumerate() {
                    if v < 0.0 {
                        cube_index |= 1 << c;
                    }
                }
                if EDGE_TABLE[cube_index] == 0 {
                    continue;
                }

                // Interpolated vertex per cut edge, deduplicated across
                // cubes via the canonical lattice-edge key.
                let mut cut = [u32::MAX; 12];
                for e in 0..12 {
                    if EDGE_TABLE[cube_index] & (1 << e) == 0 {
                        continue;
                    }
                    let ([kx, ky, kz], axis) = EDGE_KEYS[e];
                    let key = (lattice_index(ix + kx, iy + ky, iz + kz), axis);
                    let id = *edge_vertex.entry(key).or_insert_with(|| {
                        let (a, b) = EDGES[e];
                        let [ax, ay, az] = CORNERS[a];
                        let [bx, by, bz] = CORNERS[b];
                        let pa = grid.corner_position(ix + ax, iy + ay, iz + az);
                        let pb = grid.corner_position(ix + bx, iy + by, iz + bz);
                        let va = corner_vals[a];
                        let vb = corner_vals[b];
                        let t = va / (va - vb);
                        vertices.push(pa + (pb - pa) * t);
                        (vertices.len() - 1) as u32
                    });
                    cut[e] = id;
                }

                let tri = &TRIANGLE_TABLE[cube_index];
                let mut t = 0;
                while t < 16 && tri[t] >= 0 {
                    let a = cut[tri[t] as usize];
                    let b = cut[tri[t + 1] as usize];
                    let c = cut[tri[t + 2] as usize];
                    // Paranoia: drop degenerate triangles if dedup collapsed
                    // two cut edges onto one vertex.
                    if a != b && b != c && a != c {
                        // The tables wind for inside < iso; flip so the
                        // outward normal points toward positive values.
                        faces.push([a, c, b]);
                    }
                    t += 3;
                }
            }
        }
    }

    let mesh = TriMesh {
        vertices,
        faces,
        colors: None,
        normals: None,
    };
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nsf_core::Aabb;

    fn unit_box() -> GridSpec {
        GridSpec::cubic(
            Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap(),
            64,
        )
        .unwrap()
    }

    #[test]
    fn all_positive_field_gives_empty_mesh() {
        let mesh = marching_cubes(|_| 1.0, &unit_box()).unwrap();
        assert!(mesh.vertices.is_empty());
        assert!(mesh.faces.is_empty());
    }

    #[test]
    fn nan_sample_is_an_error() {
        let err = marching_cubes(
            |p| if p.x > 0.9 { f64::NAN } else { p.norm() - 0.5 },
            &unit_box(),
        )
        .unwrap_err();
        assert!(matches!(err, ExtractError::NonFiniteSample(..)));
    }

    #[test]
    fn sphere_vertices_sit_on_the_radius() {
        let grid = unit_box();
        let mesh = marching_cubes(|p| p.norm() - 0.5, &grid).unwrap();
        assert!(!mesh.vertices.is_empty());
        let tol = grid.cell_diagonal();
        for v in &mesh.vertices {
            assert!(
                (v.norm() - 0.5).abs() <= tol,
                "vertex at radius {} off the sphere",
                v.norm()
            );
        }
    }

    #[test]
    fn sphere_topology_is_closed_genus_zero() {
        let mesh = marching_cubes(|p| p.norm() - 0.5, &unit_box()).unwrap();
        assert!(mesh.is_watertight(), "sphere extraction must be watertight");
        assert_eq!(mesh.euler_characteristic(), 2);
    }

    #[test]
    fn winding_points_outward_toward_positive_field() {
        let mesh = marching_cubes(|p| p.norm() - 0.5, &unit_box()).unwrap();
        let mut outward = 0usize;
        for f in &mesh.faces {
            let (a, b, c) = (
                mesh.vertices[f[0] as usize],
                mesh.vertices[f[1] as usize],
                mesh.vertices[f[2] as usize],
            );
            let n = (b - a).cross(&(c - a));
            let centroid = (a + b + c) / 3.0;
            if n.dot(&centroid) > 0.0 {
                outward += 1;
            }
        }
        assert!(
            outward == mesh.faces.len(),
            "{outward}/{} faces wound outward",
            mesh.faces.len()
        );
    }

    #[test]
    fn no_tiny_triangles_or_bad_indices() {
        let grid = unit_box();
        // Field crafted to hit lattice points exactly at z = 0 plane.
        let mesh = marching_cubes(|p| p.z, &grid).unwrap();
        mesh.validate().unwrap();
        for f in 0..mesh.faces.len() {
            assert!(mesh.face_area(f) > 1e-12);
        }
    }

    #[test]
    fn finer_grids_stay_chamfer_consistent() {
        let bounds = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        let coarse_grid = GridSpec::cubic(bounds, 64).unwrap();
        let fine_grid = GridSpec::cubic(bounds, 128).unwrap();
        let coarse = marching_cubes(|p| p.norm() - 0.5, &coarse_grid).unwrap();
        let fine = marching_cubes(|p| p.norm() - 0.5, &fine_grid).unwrap();

        let cell = coarse_grid.cell_size().x;
        let d1 = nsf_core::chamfer_uni_points(&coarse.vertices, &fine.vertices).unwrap();
        let d2 = nsf_core::chamfer_uni_points(&fine.vertices, &coarse.vertices).unwrap();
        assert!(d1 < cell && d2 < cell, "chamfer {d1}/{d2} vs cell {cell}");
    }

    #[test]
    fn doubling_resolution_never_hurts_fidelity() {
        use rand::{Rng, SeedableRng};
        let bounds = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)).unwrap();
        // Dense analytic sampling of the target surface. The chamfer floors
        // out at the sampling density, so allow that much slack; a real
        // fidelity regression is orders of magnitude larger.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let reference: Vec<Vec3> = (0..200_000)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
                .normalize()
                    * 0.5
            })
            .collect();
        let mut last = f64::INFINITY;
        for res in [16usize, 32, 64, 128] {
            let grid = GridSpec::cubic(bounds, res).unwrap();
            let mesh = marching_cubes(|p| p.norm() - 0.5, &grid).unwrap();
            let d = nsf_core::chamfer_uni_points(&mesh.vertices, &reference).unwrap();
            assert!(
                d <= last + 5e-5,
                "chamfer to analytic sampling increased at res {res}: {last} -> {d}"
            );
            last = d;
        }
    }
}
