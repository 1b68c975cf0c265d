use std::collections::HashMap;

use rand::Rng;

use crate::{Aabb, CoreError, Result, Vec3};

/// Indexed triangle surface. Carrier of the fusion shape and of every mesh
/// the pipeline emits.
#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Per-vertex RGB in [0,1].
    pub colors: Option<Vec<[f32; 3]>>,
    /// Per-vertex unit normals.
    pub normals: Option<Vec<Vec3>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            colors: None,
            normals: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Checks the type invariants: indices in range, no degenerate face,
    /// attribute arrays aligned with the vertex array, unit normals.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(CoreError::InvalidMesh(format!(
                    "face {fi} references vertex out of range (vertex count {n})"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(CoreError::InvalidMesh(format!(
                    "face {fi} is degenerate: {f:?}"
                )));
            }
        }
        if let Some(c) = &self.colors {
            if c.len() != self.vertices.len() {
                return Err(CoreError::InvalidMesh("color count != vertex count".into()));
            }
        }
        if let Some(ns) = &self.normals {
            if ns.len() != self.vertices.len() {
                return Err(CoreError::InvalidMesh("normal count != vertex count".into()));
            }
            for (i, nr) in ns.iter().enumerate() {
                if (nr.norm() - 1.0).abs() > 1e-6 {
                    return Err(CoreError::InvalidMesh(format!(
                        "normal {i} not unit length: |n| = {}",
                        nr.norm()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face];
        let (a, b, c) = (
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        );
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Area-weighted per-vertex normals (unit length; zero-area stars fall
    /// back to +z).
    pub fn compute_vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let (a, b, c) = (
                self.vertices[f[0] as usize],
                self.vertices[f[1] as usize],
                self.vertices[f[2] as usize],
            );
            let n = (b - a).cross(&(c - a)); // magnitude = 2 * area
            for &i in f {
                acc[i as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 1e-12 {
                    n / len
                } else {
                    Vec3::new(0.0, 0.0, 1.0)
                }
            })
            .collect()
    }

    /// Undirected 1-ring adjacency.
    pub fn vertex_adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                adj[a as usize].push(b);
                adj[b as usize].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Edge count of the underlying undirected graph.
    pub fn edge_count(&self) -> usize {
        self.vertex_adjacency().iter().map(|a| a.len()).sum::<usize>() / 2
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.faces.len() as i64
    }

    /// Closed orientable 2-manifold test: every undirected edge is used by
    /// exactly two faces, once in each direction.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        // Per undirected edge: usage count and orientation balance.
        let mut usage: HashMap<(u32, u32), (u32, i32)> = HashMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                let dir = if a < b { 1 } else { -1 };
                let e = usage.entry(key).or_insert((0, 0));
                e.0 += 1;
                e.1 += dir;
            }
        }
        usage.values().all(|&(count, balance)| count == 2 && balance == 0)
    }

    /// Connected components over face connectivity (shared vertices), largest
    /// first. Each component is re-indexed; unreferenced vertices drop out.
    pub fn connected_components(&self) -> Vec<TriMesh> {
        let n = self.vertices.len();
        let mut parent: Vec<u32> = (0..n as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        for f in &self.faces {
            let r = find(&mut parent, f[0]);
            for &v in &f[1..] {
                let rv = find(&mut parent, v);
                parent[rv as usize] = r;
            }
        }
        let mut groups: HashMap<u32, Vec<usize>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            groups.entry(find(&mut parent, f[0])).or_default().push(fi);
        }
        let mut comps: Vec<TriMesh> = groups
            .into_values()
            .map(|face_ids| self.submesh(&face_ids))
            .collect();
        comps.sort_by(|a, b| {
            b.vertices
                .len()
                .cmp(&a.vertices.len())
                .then(b.faces.len().cmp(&a.faces.len()))
        });
        comps
    }

    /// Extracts the sub-mesh spanned by `face_ids`, remapping vertices and
    /// carrying attributes along.
    pub fn submesh(&self, face_ids: &[usize]) -> TriMesh {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut faces = Vec::with_capacity(face_ids.len());
        let mut order: Vec<usize> = face_ids.to_vec();
        order.sort_unstable();
        for &fi in &order {
            let mut nf = [0u32; 3];
            for (slot, &v) in self.faces[fi].iter().enumerate() {
                let next = remap.len() as u32;
                let id = *remap.entry(v).or_insert_with(|| {
                    vertices.push(self.vertices[v as usize]);
                    next
                });
                nf[slot] = id;
            }
            faces.push(nf);
        }
        let mut inverse: Vec<(u32, u32)> = remap.into_iter().collect();
        inverse.sort_by_key(|&(_, new)| new);
        let colors = self.colors.as_ref().map(|c| {
            inverse.iter().map(|&(old, _)| c[old as usize]).collect()
        });
        let normals = self.normals.as_ref().map(|ns| {
            inverse.iter().map(|&(old, _)| ns[old as usize]).collect()
        });
        TriMesh {
            vertices,
            faces,
            colors,
            normals,
        }
    }

    /// Area-weighted uniform surface sampling; returns points and the face
    /// normals at each sample.
    pub fn sample_surface<R: Rng>(&self, count: usize, rng: &mut R) -> (Vec<Vec3>, Vec<Vec3>) {
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            total += self.face_area(f);
            cumulative.push(total);
        }
        let mut points = Vec::with_capacity(count);
        let mut normals = Vec::with_capacity(count);
        for _ in 0..count {
            let t = rng.gen::<f64>() * total;
            let f = cumulative.partition_point(|&c| c < t).min(self.faces.len() - 1);
            let [ia, ib, ic] = self.faces[f];
            let (a, b, c) = (
                self.vertices[ia as usize],
                self.vertices[ib as usize],
                self.vertices[ic as usize],
            );
            let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            points.push(a + (b - a) * u + (c - a) * v);
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            normals.push(if len > 1e-12 {
                n / len
            } else {
                Vec3::new(0.0, 0.0, 1.0)
            });
        }
        (points, normals)
    }

    /// Mean squared norm of the uniform-Laplacian vectors
    /// (vertex minus the average of its 1-ring). Isolated vertices contribute
    /// zero and emit a warning.
    pub fn laplacian_energy(&self) -> f64 {
        laplacian_energy(self)
    }

    /// One explicit uniform-smoothing step: each vertex moves `lambda` of the
    /// way toward its 1-ring average. Connectivity is untouched.
    pub fn smoothed(&self, lambda: f64) -> TriMesh {
        let adj = self.vertex_adjacency();
        let mut out = self.clone();
        for (i, neighbors) in adj.iter().enumerate() {
            if neighbors.is_empty() {
                continue;
            }
            let mut avg = Vec3::zeros();
            for &j in neighbors {
                avg += self.vertices[j as usize];
            }
            avg /= neighbors.len() as f64;
            out.vertices[i] = self.vertices[i] + (avg - self.vertices[i]) * lambda;
        }
        out
    }
}

/// See [`TriMesh::laplacian_energy`].
pub fn laplacian_energy(mesh: &TriMesh) -> f64 {
    if mesh.vertices.is_empty() {
        return 0.0;
    }
    let adj = mesh.vertex_adjacency();
    let mut isolated = 0usize;
    let mut sum = 0.0;
    for (i, neighbors) in adj.iter().enumerate() {
        if neighbors.is_empty() {
            isolated += 1;
            continue;
        }
        let mut avg = Vec3::zeros();
        for &j in neighbors {
            avg += mesh.vertices[j as usize];
        }
        avg /= neighbors.len() as f64;
        sum += (mesh.vertices[i] - avg).norm_squared();
    }
    if isolated > 0 {
        log::warn!("laplacian_energy: {isolated} isolated vertices contribute 0");
    }
    sum / mesh.vertices.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_mesh(n: usize) -> TriMesh {
        // Regular (n+1)^2 planar grid in z=0, triangulated.
        let mut vertices = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Vec3::new(i as f64, j as f64, 0.0));
            }
        }
        let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        let mut faces = Vec::new();
        for j in 0..n {
            for i in 0..n {
                faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        TriMesh::new(vertices, faces).unwrap()
    }

    fn icosahedron() -> TriMesh {
        let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
        let verts = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ];
        let vertices = verts
            .iter()
            .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
            .collect();
        let faces: Vec<[u32; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        TriMesh::new(vertices, faces).unwrap()
    }

    #[test]
    fn validation_catches_bad_faces() {
        let verts = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriMesh::new(verts.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(verts, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn interior_grid_laplacian_vanishes() {
        // The uniform Laplacian of an affine embedding is zero at interior
        // vertices with a symmetric ring; boundary vertices dominate the
        // remainder. Check interior vertices directly.
        let mesh = grid_mesh(6);
        let adj = mesh.vertex_adjacency();
        for j in 1..6usize {
            for i in 1..6usize {
                let v = j * 7 + i;
                let mut avg = Vec3::zeros();
                for &u in &adj[v] {
                    avg += mesh.vertices[u as usize];
                }
                avg /= adj[v].len() as f64;
                assert!(
                    (mesh.vertices[v] - avg).norm() < 1e-12,
                    "interior vertex {v} has nonzero uniform Laplacian"
                );
            }
        }
    }

    #[test]
    fn icosphere_energy_decreases_under_smoothing() {
        let mesh = icosahedron();
        let before = mesh.laplacian_energy();
        assert!(before > 0.0);
        let after = mesh.smoothed(0.5).laplacian_energy();
        assert!(
            after < before,
            "one uniform smoothing step must reduce the Laplacian energy: {before} -> {after}"
        );
    }

    #[test]
    fn single_triangle_matches_hand_computation() {
        // Vertices: a=(0,0,0), b=(1,0,0), c=(0,1,0). Each vertex's 1-ring is
        // the other two, so L(a) = a - (b+c)/2 = (-1/2, -1/2, 0), etc.
        let mesh = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let la = Vec3::new(-0.5, -0.5, 0.0).norm_squared();
        let lb = (Vec3::x() - Vec3::new(0.0, 0.5, 0.0)).norm_squared();
        let lc = (Vec3::y() - Vec3::new(0.5, 0.0, 0.0)).norm_squared();
        let expected = (la + lb + lc) / 3.0;
        assert!((mesh.laplacian_energy() - expected).abs() < 1e-12);
    }

    #[test]
    fn icosahedron_is_watertight_genus_zero() {
        let mesh = icosahedron();
        assert!(mesh.is_watertight());
        assert_eq!(mesh.euler_characteristic(), 2);
        assert!(!grid_mesh(3).is_watertight());
    }

    #[test]
    fn components_split_and_keep_largest_first() {
        let mut mesh = icosahedron();
        let offset = mesh.vertices.len() as u32;
        // Add a far-away lone triangle.
        mesh.vertices.extend([
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(11.0, 0.0, 0.0),
            Vec3::new(10.0, 1.0, 0.0),
        ]);
        mesh.faces.push([offset, offset + 1, offset + 2]);
        let comps = mesh.connected_components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].faces.len(), 20);
        assert_eq!(comps[1].faces.len(), 1);
        comps[0].validate().unwrap();
    }

    #[test]
    fn surface_sampling_covers_area() {
        use rand::SeedableRng;
        let mesh = grid_mesh(2); // 2x2 units in z=0
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (pts, ns) = mesh.sample_surface(2000, &mut rng);
        assert_eq!(pts.len(), 2000);
        for (p, n) in pts.iter().zip(&ns) {
            assert!(p.z.abs() < 1e-12);
            assert!((0.0..=2.0).contains(&p.x) && (0.0..=2.0).contains(&p.y));
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
        let mean = pts.iter().sum::<Vec3>() / 2000.0;
        assert!((mean - Vec3::new(1.0, 1.0, 0.0)).norm() < 0.1);
    }
}
