use std::path::Path;

use serde::{Deserialize, Serialize};

use nsf_autodiff::Checkpoint;
use nsf_core::{io, Vec3};
use nsf_skeleton::save_motion;

use crate::{
    build_toy_body, generate_pose_sequence, render_depth_sequence, Camera, RenderOptions, Result,
    ToyBodySpec,
};

/// One subject entry of a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SubjectSpec {
    pub id: String,
    pub body: ToyBodySpec,
}

/// Whole-dataset generation parameters.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub subjects: Vec<SubjectSpec>,
    pub train_frames: usize,
    pub holdout_frames: usize,
    pub camera: Camera,
    pub render: RenderOptions,
    /// Distance from the camera at which bodies stand.
    pub body_distance: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            subjects: vec![
                SubjectSpec {
                    id: "s0".into(),
                    body: ToyBodySpec::default(),
                },
                SubjectSpec {
                    id: "s1".into(),
                    body: ToyBodySpec {
                        scale: 0.9,
                        radius_scale: 1.15,
                        bulge_amplitude: 0.035,
                        ..Default::default()
                    },
                },
            ],
            train_frames: 60,
            holdout_frames: 10,
            camera: Camera::default(),
            render: RenderOptions::default(),
            body_distance: 2.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub subjects: Vec<String>,
    pub train_frames: usize,
    pub holdout_frames: usize,
    pub seed: u64,
}

/// Writes the dataset layout:
///
/// ```text
/// <root>/manifest.json
/// <root>/camera.json
/// <root>/<subject>/poses.json            skeleton + train pose frames
/// <root>/<subject>/poses_holdout.json
/// <root>/<subject>/frame_%04d.ply        partial oriented clouds (train)
/// <root>/<subject>/holdout/frame_%04d.ply
/// <root>/<subject>/gt/frame_%04d.ply     posed ground-truth meshes
/// <root>/<subject>/gt_holdout/frame_%04d.ply
/// <root>/<subject>/canonical_gt.ply      canonical template (colored)
/// <root>/<subject>/skinning.nsf1         basis points + joint weights
/// ```
///
/// Ground-truth meshes exist for evaluation only; the training loader never
/// reads the `gt*` directories.
pub fn write_dataset(root: impl AsRef<Path>, spec: &DatasetSpec) -> Result<()> {
    let root = root.as_ref();
    std::fs::create_dir_all(root)?;
    spec.camera.save(root.join("camera.json"))?;
    let manifest = Manifest {
        subjects: spec.subjects.iter().map(|s| s.id.clone()).collect(),
        train_frames: spec.train_frames,
        holdout_frames: spec.holdout_frames,
        seed: spec.seed,
    };
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(root.join("manifest.json"))?),
        &manifest,
    )?;

    for (si, subject) in spec.subjects.iter().enumerate() {
        let dir = root.join(&subject.id);
        std::fs::create_dir_all(dir.join("gt"))?;
        std::fs::create_dir_all(dir.join("holdout"))?;
        std::fs::create_dir_all(dir.join("gt_holdout"))?;

        let mut body = build_toy_body(&subject.body)?;
        paint_two_tone(&mut body.mesh, subject.body.scale);

        let translation = Vec3::new(0.0, 0.0, spec.body_distance);
        let subject_seed = spec.seed ^ ((si as u64 + 1) << 32);
        let train_poses =
            generate_pose_sequence(spec.train_frames, translation, subject_seed);
        let holdout_poses =
            generate_pose_sequence(spec.holdout_frames, translation, subject_seed ^ 0xFFFF);

        save_motion(dir.join("poses.json"), &body.skeleton, &train_poses)?;
        save_motion(
            dir.join("poses_holdout.json"),
            &body.skeleton,
            &holdout_poses,
        )?;
        io::save_mesh_ply(&body.mesh, dir.join("canonical_gt.ply"))?;

        let mut skin_ck = Checkpoint::new();
        let basis = body.skinning.basis();
        let mut flat = Vec::with_capacity(basis.len() * 3);
        for p in basis {
            flat.extend_from_slice(&[p.x as f32, p.y as f32, p.z as f32]);
        }
        skin_ck.insert("skin/basis", vec![basis.len(), 3], flat);
        let weights = body.skinning.basis_weights();
        let k = body.skeleton.joint_count();
        let mut wflat = Vec::with_capacity(weights.len() * k);
        for w in weights {
            wflat.extend(w.iter().map(|&v| v as f32));
        }
        skin_ck.insert("skin/weights", vec![weights.len(), k], wflat);
        skin_ck.save(dir.join("skinning.nsf1"))?;

        let mut render_opts = spec.render.clone();
        render_opts.seed = subject_seed;
        let train = render_depth_sequence(&body, &train_poses, &spec.camera, &render_opts)?;
        for (i, frame) in train.iter().enumerate() {
            io::save_cloud_ply(&frame.cloud, dir.join(format!("frame_{i:04}.ply")))?;
            io::save_mesh_ply(&frame.gt_mesh, dir.join(format!("gt/frame_{i:04}.ply")))?;
        }
        render_opts.seed = subject_seed ^ 0xFFFF;
        let holdout = render_depth_sequence(&body, &holdout_poses, &spec.camera, &render_opts)?;
        for (i, frame) in holdout.iter().enumerate() {
            io::save_cloud_ply(&frame.cloud, dir.join(format!("holdout/frame_{i:04}.ply")))?;
            io::save_mesh_ply(
                &frame.gt_mesh,
                dir.join(format!("gt_holdout/frame_{i:04}.ply")),
            )?;
        }
        log::info!(
            "subject {}: {} train + {} holdout frames written",
            subject.id,
            spec.train_frames,
            spec.holdout_frames
        );
    }
    Ok(())
}

/// Red above the chest line, blue below: a two-tone texture with a known
/// label for every vertex.
fn paint_two_tone(mesh: &mut nsf_core::TriMesh, scale: f64) {
    let split = 0.2 * scale;
    mesh.colors = Some(
        mesh.vertices
            .iter()
            .map(|v| {
                if v.y > split {
                    [0.8, 0.1, 0.1]
                } else {
                    [0.1, 0.1, 0.8]
                }
            })
            .collect(),
    );
}
