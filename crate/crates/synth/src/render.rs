use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nsf_core::{estimate_normals, PointCloud, TriMesh, Vec3};
use nsf_skeleton::{forward_kinematics, lbs_forward, Pose};

use crate::{apply_procedural_deformation, Camera, Result, SynthError, ToyBody};

#[derive(Debug, Clone)]
pub struct RenderOptions {
    /// Gaussian depth jitter along the ray, meters.
    pub depth_noise_sigma: f64,
    /// Cap on points kept per frame (seeded subsample); 0 keeps all.
    pub max_points: usize,
    /// Neighborhood size for normal estimation.
    pub normal_k: usize,
    pub seed: u64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            depth_noise_sigma: 0.002,
            max_points: 4096,
            normal_k: 16,
            seed: 0,
        }
    }
}

/// One rendered observation: the pose that produced it, the partial oriented
/// point cloud seen by the camera, and the posed ground-truth mesh (kept for
/// evaluation only; training code never receives it).
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub pose: Pose,
    pub cloud: PointCloud,
    pub gt_mesh: TriMesh,
}

/// Poses the ground-truth body for each frame (procedural deformation, then
/// LBS with weights at the deformed points), rasterizes a depth map, and
/// unprojects it into an oriented partial point cloud.
pub fn render_depth_sequence(
    body: &ToyBody,
    poses: &[Pose],
    camera: &Camera,
    options: &RenderOptions,
) -> Result<Vec<RenderedFrame>> {
    let mut frames = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let gt_mesh = pose_ground_truth(body, pose)?;
        let frame_seed = options.seed ^ (i as u64).wrapping_mul(0x9E3779B97F4A7C15);
        let cloud = render_to_cloud(&gt_mesh, camera, options, frame_seed)?;
        frames.push(RenderedFrame {
            pose: pose.clone(),
            cloud,
            gt_mesh,
        });
    }
    Ok(frames)
}

/// Ground-truth posed mesh: canonical vertices bulge procedurally, then skin
/// with weights queried at the deformed positions (the same convention the
/// learned model uses when reposing).
pub fn pose_ground_truth(body: &ToyBody, pose: &Pose) -> Result<TriMesh> {
    let deformed = apply_procedural_deformation(&body.mesh.vertices, pose, body);
    let transforms = forward_kinematics(&body.skeleton, pose)?;
    let weights: Vec<Vec<f64>> = deformed
        .iter()
        .map(|p| body.skinning.query_weights(p))
        .collect();
    let posed = lbs_forward(&deformed, &weights, &transforms)?;
    Ok(TriMesh {
        vertices: posed,
        faces: body.mesh.faces.clone(),
        colors: body.mesh.colors.clone(),
        normals: None,
    })
}

/// Rasterizes a mesh into a z-buffer. Returns the depth map (row-major,
/// `f64::INFINITY` where nothing was hit) and per-pixel interpolated colors
/// when the mesh has them.
pub fn render_mesh_depth(
    mesh: &TriMesh,
    camera: &Camera,
) -> (Vec<f64>, Option<Vec<[f32; 3]>>) {
    let (w, h) = (camera.width, camera.height);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut colors = mesh.colors.as_ref().map(|_| vec![[0.0f32; 3]; w * h]);

    let projected: Vec<(f64, f64, f64)> =
        mesh.vertices.iter().map(|v| camera.project(v)).collect();

    for f in &mesh.faces {
        let (pa, pb, pc) = (
            projected[f[0] as usize],
            projected[f[1] as usize],
            projected[f[2] as usize],
        );
        // Cull triangles behind the near plane.
        if pa.2 <= 0.05 || pb.2 <= 0.05 || pc.2 <= 0.05 {
            continue;
        }
        let min_u = pa.0.min(pb.0).min(pc.0).floor().max(0.0) as usize;
        let max_u = (pa.0.max(pb.0).max(pc.0).ceil() as i64).min(w as i64 - 1);
        let min_v = pa.1.min(pb.1).min(pc.1).floor().max(0.0) as usize;
        let max_v = (pa.1.max(pb.1).max(pc.1).ceil() as i64).min(h as i64 - 1);
        if max_u < 0 || max_v < 0 {
            continue;
        }

        let area = edge(&pa, &pb, (pc.0, pc.1));
        if area.abs() < 1e-12 {
            continue;
        }
        for py in min_v..=max_v as usize {
            for px in min_u..=max_u as usize {
                let point = (px as f64 + 0.5, py as f64 + 0.5);
                let w0 = edge(&pb, &pc, point) / area;
                let w1 = edge(&pc, &pa, point) / area;
                let w2 = edge(&pa, &pb, point) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                // Perspective-correct depth: 1/z interpolates linearly in
                // screen space.
                let inv_z = w0 / pa.2 + w1 / pb.2 + w2 / pc.2;
                let z = 1.0 / inv_z;
                let idx = py * w + px;
                if z < depth[idx] {
                    depth[idx] = z;
                    if let (Some(cbuf), Some(mc)) = (&mut colors, &mesh.colors) {
                        let (ca, cb, cc) = (
                            mc[f[0] as usize],
                            mc[f[1] as usize],
                            mc[f[2] as usize],
                        );
                        // Perspective-correct attribute interpolation.
                        for ch in 0..3 {
                            let num = w0 * ca[ch] as f64 / pa.2
                                + w1 * cb[ch] as f64 / pb.2
                                + w2 * cc[ch] as f64 / pc.2;
                            cbuf[idx][ch] = (num * z) as f32;
                        }
                    }
                }
            }
        }
    }
    (depth, colors)
}

fn edge(a: &(f64, f64, f64), b: &(f64, f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Depth map -> oriented partial cloud: optional depth jitter along the ray,
/// unprojection at pixel centers, seeded subsampling, covariance normals
/// oriented toward the camera.
fn render_to_cloud(
    mesh: &TriMesh,
    camera: &Camera,
    options: &RenderOptions,
    seed: u64,
) -> Result<PointCloud> {
    let (depth, colors) = render_mesh_depth(mesh, camera);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (options.depth_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, options.depth_noise_sigma).unwrap());

    let mut points = Vec::new();
    let mut point_colors = colors.as_ref().map(|_| Vec::new());
    for py in 0..camera.height {
        for px in 0..camera.width {
            let idx = py * camera.width + px;
            let z = depth[idx];
            if !z.is_finite() {
                continue;
            }
            let z = match &noise {
                Some(n) => z + n.sample(&mut rng),
                None => z,
            };
            points.push(camera.unproject(px as f64 + 0.5, py as f64 + 0.5, z));
            if let (Some(pc), Some(cbuf)) = (&mut point_colors, &colors) {
                pc.push(cbuf[idx]);
            }
        }
    }
    if points.is_empty() {
        return Err(SynthError::OutOfFrustum);
    }

    if options.max_points > 0 && points.len() > options.max_points {
        let mut order: Vec<usize> = (0..points.len()).collect();
        // Seeded partial Fisher-Yates keeps the subsample deterministic.
        for i in 0..options.max_points {
            let j = rng.gen_range(i..order.len());
            order.swap(i, j);
        }
        order.truncate(options.max_points);
        order.sort_unstable();
        points = order.iter().map(|&i| points[i]).collect();
        if let Some(pc) = &mut point_colors {
            *pc = order.iter().map(|&i| pc[i]).collect();
        }
    }

    let mut cloud = estimate_normals(&points, camera.position(), options.normal_k)?;
    if let Some(pc) = point_colors {
        // estimate_normals can drop degenerate points; remap colors by
        // position identity (dropped points are rare and at the boundary).
        if cloud.points.len() == points.len() {
            cloud.colors = Some(pc);
        } else {
            let index = nsf_core::build_knn_index(&points)?;
            cloud.colors = Some(
                cloud
                    .points
                    .iter()
                    .map(|p| pc[index.nearest(p).0])
                    .collect(),
            );
        }
    }
    Ok(cloud)
}
