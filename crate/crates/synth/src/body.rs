use nsf_core::{Aabb, TriMesh, Vec3};
use nsf_extract::{marching_cubes, GridSpec};
use nsf_skeleton::{Skeleton, SkinningField};

use crate::{Result, SynthError};

/// Capsule-union body parameters. The default five-joint rig has a pelvis
/// root carrying torso and head, two leg joints, and two shoulder joints,
/// posed in a T at roughly human desk-scale proportions.
#[derive(Debug, Clone)]
pub struct ToyBodySpec {
    /// Uniform similarity scale of the whole body.
    pub scale: f64,
    /// Multiplier on all capsule radii (subject girth variation).
    pub radius_scale: f64,
    /// Peak procedural bulge displacement, meters.
    pub bulge_amplitude: f64,
    /// Bulge lobes per bone.
    pub bulge_frequency: f64,
    /// Marching-cubes cells along the longest axis for the template mesh.
    pub mesh_resolution: usize,
    /// Softmax temperature of the skinning-weight partition, meters.
    pub weight_temperature: f64,
}

impl Default for ToyBodySpec {
    fn default() -> Self {
        Self {
            scale: 1.0,
            radius_scale: 1.0,
            bulge_amplitude: 0.04,
            bulge_frequency: 1.0,
            mesh_resolution: 96,
            weight_temperature: 0.025,
        }
    }
}

impl ToyBodySpec {
    fn validate(&self) -> Result<()> {
        if self.scale <= 0.0 || self.radius_scale <= 0.0 {
            return Err(SynthError::InvalidSpec("scale factors must be positive".into()));
        }
        if self.bulge_frequency <= 0.0 {
            return Err(SynthError::InvalidSpec("bulge frequency must be positive".into()));
        }
        if self.weight_temperature <= 0.0 {
            return Err(SynthError::InvalidSpec("weight temperature must be positive".into()));
        }
        Ok(())
    }
}

/// One skinned capsule: a segment with a radius, driven by a joint.
#[derive(Debug, Clone, Copy)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
    pub joint: usize,
}

impl Capsule {
    /// Exact signed distance.
    pub fn sdf(&self, x: &Vec3) -> f64 {
        self.closest(x).0 - self.radius
    }

    /// (distance to axis segment, parameter along segment in [0,1]).
    pub fn closest(&self, x: &Vec3) -> (f64, f64) {
        let ab = self.b - self.a;
        let t = ((x - self.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        ((x - (self.a + ab * t)).norm(), t)
    }
}

/// Generated body: template mesh, rig, diffused skinning weights, and the
/// exact capsule-union SDF.
#[derive(Debug, Clone)]
pub struct ToyBody {
    pub spec: ToyBodySpec,
    pub mesh: TriMesh,
    pub skeleton: Skeleton,
    pub skinning: SkinningField,
    pub capsules: Vec<Capsule>,
}

impl ToyBody {
    /// Exact union SDF (min over capsules).
    pub fn sdf(&self, x: &Vec3) -> f64 {
        self.capsules
            .iter()
            .map(|c| c.sdf(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the capsule closest to a point.
    pub fn nearest_capsule(&self, x: &Vec3) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.capsules.iter().enumerate() {
            let d = c.sdf(x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Softmax partition of unity over per-joint capsule distances.
    pub fn joint_weights(&self, x: &Vec3) -> Vec<f64> {
        let k = self.skeleton.joint_count();
        let mut per_joint = vec![f64::INFINITY; k];
        for c in &self.capsules {
            per_joint[c.joint] = per_joint[c.joint].min(c.sdf(x));
        }
        let tau = self.spec.weight_temperature * self.spec.scale;
        let m = per_joint.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut w: Vec<f64> = per_joint.iter().map(|d| (-(d - m) / tau).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }

    /// Body height (bounding box extent along y).
    pub fn height(&self) -> f64 {
        self.mesh
            .bounding_box()
            .map(|b| b.extents().y)
            .unwrap_or(0.0)
    }
}

fn capsule_layout(spec: &ToyBodySpec) -> (Vec<Option<usize>>, Vec<Vec3>, Vec<Capsule>) {
    let s = spec.scale;
    let r = spec.radius_scale * s;

    // Joint rest positions.
    let pelvis = Vec3::new(0.0, 0.0, 0.0) * s;
    let l_hip = Vec3::new(-0.10, 0.0, 0.0) * s;
    let r_hip = Vec3::new(0.10, 0.0, 0.0) * s;
    let l_shoulder = Vec3::new(-0.16, 0.42, 0.0) * s;
    let r_shoulder = Vec3::new(0.16, 0.42, 0.0) * s;

    let parents = vec![None, Some(0), Some(0), Some(0), Some(0)];
    let offsets = vec![
        pelvis,
        l_hip - pelvis,
        r_hip - pelvis,
        l_shoulder - pelvis,
        r_shoulder - pelvis,
    ];

    let capsules = vec![
        // Torso and head ride the root.
        Capsule {
            a: Vec3::new(0.0, -0.02, 0.0) * s,
            b: Vec3::new(0.0, 0.44, 0.0) * s,
            radius: 0.115 * r,
            joint: 0,
        },
        Capsule {
            a: Vec3::new(0.0, 0.46, 0.0) * s,
            b: Vec3::new(0.0, 0.56, 0.0) * s,
            radius: 0.07 * r,
            joint: 0,
        },
        Capsule {
            a: l_hip,
            b: Vec3::new(-0.10, -0.46, 0.0) * s,
            radius: 0.055 * r,
            joint: 1,
        },
        Capsule {
            a: r_hip,
            b: Vec3::new(0.10, -0.46, 0.0) * s,
            radius: 0.055 * r,
            joint: 2,
        },
        Capsule {
            a: l_shoulder,
            b: Vec3::new(-0.52, 0.42, 0.0) * s,
            radius: 0.045 * r,
            joint: 3,
        },
        Capsule {
            a: r_shoulder,
            b: Vec3::new(0.52, 0.42, 0.0) * s,
            radius: 0.045 * r,
            joint: 4,
        },
    ];
    (parents, offsets, capsules)
}

/// Meshes the capsule union, derives diffused skinning weights at the mesh
/// vertices, and assembles the rig. Errors when the union comes out
/// disconnected or open (a spec with non-overlapping capsules).
pub fn build_toy_body(spec: &ToyBodySpec) -> Result<ToyBody> {
    spec.validate()?;
    let (parents, offsets, capsules) = capsule_layout(spec);
    let skeleton = Skeleton::new(parents, offsets)?;

    // Tight bounds around all capsules, padded by a few cells.
    let mut bounds: Option<Aabb> = None;
    for c in &capsules {
        let r = Vec3::repeat(c.radius);
        let cap_box = Aabb::new(c.a.inf(&c.b) - r, c.a.sup(&c.b) + r)?;
        bounds = Some(match bounds {
            None => cap_box,
            Some(b) => b.union(&cap_box),
        });
    }
    let bounds = bounds
        .ok_or_else(|| SynthError::InvalidSpec("no capsules".into()))?
        .padded(0.05 * spec.scale);

    // Resolution scales with the box so cells stay near-cubic.
    let ext = bounds.extents();
    let longest = ext.x.max(ext.y).max(ext.z);
    let res_for = |e: f64| {
        (((spec.mesh_resolution as f64) * e / longest).round() as usize).max(8)
    };
    let grid = GridSpec::new(bounds, [res_for(ext.x), res_for(ext.y), res_for(ext.z)])?;

    let sdf = |x: &Vec3| {
        capsules
            .iter()
            .map(|c| c.sdf(x))
            .fold(f64::INFINITY, f64::min)
    };
    let mesh = marching_cubes(sdf, &grid)?;
    if mesh.faces.is_empty() {
        return Err(SynthError::NonManifold("empty surface".into()));
    }
    let components = mesh.connected_components();
    if components.len() != 1 {
        return Err(SynthError::NonManifold(format!(
            "{} disconnected components",
            components.len()
        )));
    }
    if !mesh.is_watertight() {
        return Err(SynthError::NonManifold("open surface".into()));
    }

    let body_no_field = ToyBody {
        spec: spec.clone(),
        mesh: mesh.clone(),
        skeleton: skeleton.clone(),
        // Placeholder; replaced below once weights exist.
        skinning: SkinningField::new(
            vec![Vec3::zeros(); 3],
            vec![vec![1.0, 0.0, 0.0, 0.0, 0.0]; 3],
            1,
        )?,
        capsules: capsules.clone(),
    };
    let weights: Vec<Vec<f64>> = mesh
        .vertices
        .iter()
        .map(|v| body_no_field.joint_weights(v))
        .collect();
    let skinning = SkinningField::new(mesh.vertices.clone(), weights, SkinningField::DEFAULT_K)?;

    Ok(ToyBody {
        spec: spec.clone(),
        mesh,
        skeleton,
        skinning,
        capsules,
    })
}
