use std::path::Path;

use serde::{Deserialize, Serialize};

use nsf_core::Vec3;

use crate::{Pose, Result, Skeleton};

/// On-disk schema for a skeleton plus a pose sequence:
/// `joints[]` (parent-relative rest offsets), `parents[]` (-1 for the root),
/// and `frames[]` of per-joint axis-angle rotations with a root translation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionDoc {
    pub joints: Vec<[f64; 3]>,
    pub parents: Vec<i64>,
    pub frames: Vec<FrameDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameDoc {
    pub rotations: Vec<[f64; 3]>,
    pub root_translation: [f64; 3],
}

impl MotionDoc {
    pub fn from_parts(skeleton: &Skeleton, frames: &[Pose]) -> Self {
        Self {
            joints: skeleton
                .rest_offsets()
                .iter()
                .map(|o| [o.x, o.y, o.z])
                .collect(),
            parents: skeleton
                .parents()
                .iter()
                .map(|p| p.map_or(-1, |v| v as i64))
                .collect(),
            frames: frames
                .iter()
                .map(|f| FrameDoc {
                    rotations: f.rotations.iter().map(|r| [r.x, r.y, r.z]).collect(),
                    root_translation: [
                        f.root_translation.x,
                        f.root_translation.y,
                        f.root_translation.z,
                    ],
                })
                .collect(),
        }
    }

    pub fn into_parts(self) -> Result<(Skeleton, Vec<Pose>)> {
        let parents = self
            .parents
            .iter()
            .map(|&p| if p < 0 { None } else { Some(p as usize) })
            .collect();
        let offsets = self
            .joints
            .iter()
            .map(|j| Vec3::new(j[0], j[1], j[2]))
            .collect();
        let skeleton = Skeleton::new(parents, offsets)?;
        let frames = self
            .frames
            .into_iter()
            .map(|f| {
                let pose = Pose {
                    rotations: f
                        .rotations
                        .iter()
                        .map(|r| Vec3::new(r[0], r[1], r[2]))
                        .collect(),
                    root_translation: Vec3::new(
                        f.root_translation[0],
                        f.root_translation[1],
                        f.root_translation[2],
                    ),
                };
                pose.validate(&skeleton)?;
                Ok(pose)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((skeleton, frames))
    }
}

pub fn save_motion(path: impl AsRef<Path>, skeleton: &Skeleton, frames: &[Pose]) -> Result<()> {
    let doc = MotionDoc::from_parts(skeleton, frames);
    let file = std::fs::File::create(path.as_ref())?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &doc)?;
    Ok(())
}

pub fn load_motion(path: impl AsRef<Path>) -> Result<(Skeleton, Vec<Pose>)> {
    let file = std::fs::File::open(path.as_ref())?;
    let doc: MotionDoc = serde_json::from_reader(std::io::BufReader::new(file))?;
    doc.into_parts()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motion_round_trip() {
        let sk = Skeleton::new(
            vec![None, Some(0), Some(0)],
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
        )
        .unwrap();
        let frames = vec![
            Pose::identity(3),
            Pose {
                rotations: vec![Vec3::new(0.1, 0.0, 0.3), Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0)],
                root_translation: Vec3::new(0.0, 0.0, 2.5),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.json");
        save_motion(&path, &sk, &frames).unwrap();
        let (sk2, frames2) = load_motion(&path).unwrap();
        assert_eq!(sk2, sk);
        assert_eq!(frames2, frames);
    }

    #[test]
    fn out_of_range_rotation_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"joints":[[0,0,0]],"parents":[-1],
                "frames":[{"rotations":[[4.0,0,0]],"root_translation":[0,0,0]}]}"#,
        )
        .unwrap();
        assert!(load_motion(&path).is_err());
    }
}
