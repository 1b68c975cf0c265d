use std::collections::BTreeMap;

use rand::Rng;

use nsf_autodiff::{Checkpoint, Tensor};
use nsf_core::{TriMesh, Vec3};
use nsf_fusion::{project_batch, FusionModel, ProjectionParams};
use nsf_skeleton::{forward_kinematics, lbs_forward, Pose, Skeleton, SkinningField};

use crate::features::init_features;
use crate::{NsfError, PoseDecoder, Result, SurfaceFeatures, FEATURE_DIM, POSE_FEATURE_DIM};

/// Precomputed interpolation support of a mesh (or point set) against a
/// subject's feature basis: projection and 3-NN lookup happen once, then
/// every pose reuses the binding.
#[derive(Debug, Clone)]
pub struct SurfaceBinding {
    pub indices: Vec<[u32; 3]>,
    pub weights: Vec<[f32; 3]>,
}

/// Deformed points plus per-point displacement vectors.
#[derive(Debug, Clone)]
pub struct DeformResult {
    pub deformed: Vec<Vec3>,
    pub displacements: Vec<Vec3>,
}

/// Full surface-field model: per-subject features over the fusion shape and
/// one shared pose decoder.
#[derive(Debug, Clone)]
pub struct NsfModel {
    pub fusion: FusionModel,
    pub features: BTreeMap<String, SurfaceFeatures>,
    pub decoder: PoseDecoder,
    pub projection: ProjectionParams,
}

impl NsfModel {
    pub fn new<R: Rng>(fusion: FusionModel, joint_count: usize, rng: &mut R) -> Self {
        Self {
            fusion,
            features: BTreeMap::new(),
            decoder: PoseDecoder::new(joint_count, FEATURE_DIM, rng),
            projection: ProjectionParams::default(),
        }
    }

    /// Initializes a subject's feature set from its fusion mesh.
    pub fn init_subject_features<R: Rng>(
        &mut self,
        subject: &str,
        mesh: &TriMesh,
        rng: &mut R,
    ) -> Result<()> {
        self.fusion.code(subject)?;
        let features = init_features(mesh, self.decoder.feature_dim(), rng)?;
        self.features.insert(subject.to_string(), features);
        Ok(())
    }

    pub fn subject_features(&self, subject: &str) -> Result<&SurfaceFeatures> {
        self.features
            .get(subject)
            .ok_or_else(|| NsfError::MissingFeatures(subject.to_string()))
    }

    pub fn subject_features_mut(&mut self, subject: &str) -> Result<&mut SurfaceFeatures> {
        self.features
            .get_mut(subject)
            .ok_or_else(|| NsfError::MissingFeatures(subject.to_string()))
    }

    /// Projects the query points onto the fusion surface and resolves their
    /// interpolation support there.
    pub fn bind_points(&self, subject: &str, points: &[Vec3]) -> Result<SurfaceBinding> {
        let features = self.subject_features(subject)?;
        let projected = project_batch(&self.fusion, subject, points, &self.projection)?;
        let mut indices = Vec::with_capacity(points.len());
        let mut weights = Vec::with_capacity(points.len());
        for p in &projected {
            let (idx, w) = features.interpolation(p);
            indices.push(idx);
            weights.push(w);
        }
        Ok(SurfaceBinding { indices, weights })
    }

    /// Interpolated features for a binding, as a (B, D) matrix.
    pub fn gather_features(&self, subject: &str, binding: &SurfaceBinding) -> Result<Tensor> {
        let features = self.subject_features(subject)?;
        let d = features.dim();
        let mut out = Tensor::zeros(binding.indices.len(), d);
        for (row, (idx, w)) in binding.indices.iter().zip(&binding.weights).enumerate() {
            let dst = &mut out.data[row * d..(row + 1) * d];
            for j in 0..3 {
                let src = features.features.row(idx[j] as usize);
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o += w[j] * v;
                }
            }
        }
        Ok(out)
    }

    /// Pose-dependent deformation of canonical points with a precomputed
    /// binding: `x^p = x^c + f_pose(F(x^cc), pose)`.
    pub fn deform_bound(
        &self,
        subject: &str,
        binding: &SurfaceBinding,
        points: &[Vec3],
        pose: &Pose,
    ) -> Result<DeformResult> {
        assert_eq!(binding.indices.len(), points.len());
        let feats = self.gather_features(subject, binding)?;
        let pose_feat = self.decoder.encode_pose(pose);

        let d = feats.cols;
        let width = d + POSE_FEATURE_DIM;
        let mut input = Tensor::zeros(points.len(), width);
        for i in 0..points.len() {
            input.data[i * width..i * width + d].copy_from_slice(feats.row(i));
            input.data[i * width + d..(i + 1) * width].copy_from_slice(&pose_feat);
        }
        let disp = self.decoder.displacements(&input);

        let mut deformed = Vec::with_capacity(points.len());
        let mut displacements = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let dv = Vec3::new(
                disp.data[i * 3] as f64,
                disp.data[i * 3 + 1] as f64,
                disp.data[i * 3 + 2] as f64,
            );
            displacements.push(dv);
            deformed.push(p + dv);
        }
        Ok(DeformResult {
            deformed,
            displacements,
        })
    }

    /// One-shot deformation: projection, feature lifting, and displacement.
    pub fn deform_points(
        &self,
        subject: &str,
        points: &[Vec3],
        pose: &Pose,
    ) -> Result<DeformResult> {
        let binding = self.bind_points(subject, points)?;
        self.deform_bound(subject, &binding, points, pose)
    }

    /// Poses a canonical mesh: deform vertices, then skin them with weights
    /// queried at the deformed canonical positions. Faces copy through
    /// unchanged, which keeps connectivity identical across poses.
    pub fn pose_mesh(
        &self,
        subject: &str,
        canonical: &TriMesh,
        pose: &Pose,
        skeleton: &Skeleton,
        skin: &SkinningField,
    ) -> Result<TriMesh> {
        let binding = self.bind_points(subject, &canonical.vertices)?;
        self.pose_mesh_bound(subject, canonical, &binding, pose, skeleton, skin)
    }

    /// [`NsfModel::pose_mesh`] with a reusable binding; the amortized path
    /// for animation.
    pub fn pose_mesh_bound(
        &self,
        subject: &str,
        canonical: &TriMesh,
        binding: &SurfaceBinding,
        pose: &Pose,
        skeleton: &Skeleton,
        skin: &SkinningField,
    ) -> Result<TriMesh> {
        let deform = self.deform_bound(subject, binding, &canonical.vertices, pose)?;
        let transforms = forward_kinematics(skeleton, pose)?;
        let weights: Vec<Vec<f64>> = deform
            .deformed
            .iter()
            .map(|p| skin.query_weights(p))
            .collect();
        let posed = lbs_forward(&deform.deformed, &weights, &transforms)?;
        Ok(TriMesh {
            vertices: posed,
            faces: canonical.faces.clone(),
            colors: canonical.colors.clone(),
            normals: None,
        })
    }

    // ---- persistence -------------------------------------------------------

    pub fn write_into(&self, ck: &mut Checkpoint) {
        self.fusion.write_into(ck);
        for (l, layer) in self.decoder.pose_encoder.layers.iter().enumerate() {
            ck.insert_tensor(format!("pose_encoder/layer{l}/w"), &layer.w);
            ck.insert_tensor(format!("pose_encoder/layer{l}/b"), &layer.b);
        }
        for (l, layer) in self.decoder.deform.layers.iter().enumerate() {
            ck.insert_tensor(format!("pose_decoder/layer{l}/w"), &layer.w);
            ck.insert_tensor(format!("pose_decoder/layer{l}/b"), &layer.b);
        }
        for (id, f) in &self.features {
            ck.insert_tensor(format!("feat/{id}"), &f.features);
            let basis = f.basis();
            let mut flat = Vec::with_capacity(basis.len() * 3);
            for p in basis {
                flat.extend_from_slice(&[p.x as f32, p.y as f32, p.z as f32]);
            }
            ck.insert(format!("basis/{id}"), vec![basis.len(), 3], flat);
        }
    }

    pub fn read_from(ck: &Checkpoint, joint_count: usize) -> Result<Self> {
        let fusion = FusionModel::read_from(ck)?;

        // Layer records run 0..n; everything but the final layer is ReLU.
        let read_mlp = |prefix: &str| -> Result<nsf_autodiff::Mlp> {
            let mut layers = Vec::new();
            let mut l = 0;
            while ck.contains(&format!("{prefix}/layer{l}/w")) {
                layers.push(nsf_autodiff::Layer {
                    w: ck.tensor(&format!("{prefix}/layer{l}/w"))?,
                    b: ck.tensor(&format!("{prefix}/layer{l}/b"))?,
                    act: nsf_autodiff::Activation::Relu,
                });
                l += 1;
            }
            if layers.is_empty() {
                return Err(NsfError::Autodiff(nsf_autodiff::AutodiffError::Checkpoint(
                    format!("no layers under '{prefix}'"),
                )));
            }
            layers.last_mut().expect("nonempty").act = nsf_autodiff::Activation::None;
            Ok(nsf_autodiff::Mlp { layers })
        };
        let pose_encoder = read_mlp("pose_encoder")?;
        let deform = read_mlp("pose_decoder")?;
        let decoder = PoseDecoder::from_parts(pose_encoder, deform, joint_count);

        let mut features = BTreeMap::new();
        for name in ck.names() {
            if let Some(id) = name.strip_prefix("feat/") {
                let feat = ck.tensor(name)?;
                let basis_t = ck.tensor(&format!("basis/{id}"))?;
                let basis: Vec<Vec3> = basis_t
                    .data
                    .chunks(3)
                    .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
                    .collect();
                features.insert(id.to_string(), SurfaceFeatures::from_parts(basis, feat)?);
            }
        }
        Ok(Self {
            fusion,
            features,
            decoder,
            projection: ProjectionParams::default(),
        })
    }
}
