use nalgebra::{Matrix4, Rotation3, Unit};
use nsf_core::Vec3;

use crate::{Result, SkeletonError};

/// Joint hierarchy with rest-pose offsets. Joint 0 is the root; parents come
/// before children so one forward sweep computes the kinematic chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<Vec3>,
}

impl Skeleton {
    pub fn new(parents: Vec<Option<usize>>, rest_offsets: Vec<Vec3>) -> Result<Self> {
        if parents.is_empty() {
            return Err(SkeletonError::InvalidSkeleton("no joints".into()));
        }
        if parents.len() != rest_offsets.len() {
            return Err(SkeletonError::InvalidSkeleton(
                "parents/offsets length mismatch".into(),
            ));
        }
        if parents[0].is_some() {
            return Err(SkeletonError::InvalidSkeleton(
                "joint 0 must be the root".into(),
            ));
        }
        for (i, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(parent) if *parent < i => {}
                Some(parent) => {
                    return Err(SkeletonError::InvalidSkeleton(format!(
                        "joint {i} has parent {parent} >= itself; joints must be topologically ordered"
                    )))
                }
                None => {
                    return Err(SkeletonError::InvalidSkeleton(format!(
                        "joint {i} is a second root"
                    )))
                }
            }
        }
        Ok(Self {
            parents,
            rest_offsets,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn rest_offsets(&self) -> &[Vec3] {
        &self.rest_offsets
    }

    /// Rest-pose world positions of all joints.
    pub fn rest_positions(&self) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); self.joint_count()];
        for i in 0..self.joint_count() {
            out[i] = match self.parents[i] {
                None => self.rest_offsets[i],
                Some(p) => out[p] + self.rest_offsets[i],
            };
        }
        out
    }

    /// Uniformly scaled copy (offsets scale; topology unchanged).
    pub fn scaled(&self, factor: f64) -> Skeleton {
        Skeleton {
            parents: self.parents.clone(),
            rest_offsets: self.rest_offsets.iter().map(|o| o * factor).collect(),
        }
    }
}

/// Per-joint axis-angle rotations plus a root translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotations: Vec<Vec3>,
    pub root_translation: Vec3,
}

impl Pose {
    pub fn identity(joint_count: usize) -> Self {
        Self {
            rotations: vec![Vec3::zeros(); joint_count],
            root_translation: Vec3::zeros(),
        }
    }

    pub fn validate(&self, skeleton: &Skeleton) -> Result<()> {
        if self.rotations.len() != skeleton.joint_count() {
            return Err(SkeletonError::InvalidPose(format!(
                "pose has {} rotations for {} joints",
                self.rotations.len(),
                skeleton.joint_count()
            )));
        }
        for (i, r) in self.rotations.iter().enumerate() {
            if !r.iter().all(|c| c.is_finite()) {
                return Err(SkeletonError::InvalidPose(format!("rotation {i} not finite")));
            }
            if r.norm() >= std::f64::consts::PI {
                return Err(SkeletonError::InvalidPose(format!(
                    "rotation {i} magnitude {} outside canonical range [0, pi)",
                    r.norm()
                )));
            }
        }
        if !self.root_translation.iter().all(|c| c.is_finite()) {
            return Err(SkeletonError::InvalidPose("root translation not finite".into()));
        }
        Ok(())
    }

    /// Joint rotations flattened to a K*3 vector (root translation excluded).
    pub fn flattened_rotations(&self) -> Vec<f32> {
        self.rotations
            .iter()
            .flat_map(|r| [r.x as f32, r.y as f32, r.z as f32])
            .collect()
    }
}

/// Per-joint rigid skinning transforms mapping rest space to posed space.
#[derive(Debug, Clone)]
pub struct JointTransforms {
    transforms: Vec<Matrix4<f64>>,
}

impl JointTransforms {
    pub fn joint_count(&self) -> usize {
        self.transforms.len()
    }

    pub fn transform(&self, joint: usize) -> &Matrix4<f64> {
        &self.transforms[joint]
    }

    pub fn transforms(&self) -> &[Matrix4<f64>] {
        &self.transforms
    }

    pub fn identity(joint_count: usize) -> Self {
        Self {
            transforms: vec![Matrix4::identity(); joint_count],
        }
    }

    /// Builds transforms directly; rotation blocks must be orthonormal.
    pub fn from_matrices(transforms: Vec<Matrix4<f64>>) -> Result<Self> {
        for (i, t) in transforms.iter().enumerate() {
            let r = t.fixed_view::<3, 3>(0, 0);
            let should_be_eye = r * r.transpose();
            if (should_be_eye - nalgebra::Matrix3::identity()).norm() > 1e-6 {
                return Err(SkeletonError::InvalidPose(format!(
                    "transform {i} rotation block not orthonormal"
                )));
            }
            if (r.determinant() - 1.0).abs() > 1e-6 {
                return Err(SkeletonError::InvalidPose(format!(
                    "transform {i} determinant {} != +1",
                    r.determinant()
                )));
            }
        }
        Ok(Self { transforms })
    }

    /// Applies a global rigid transform on the posed side.
    pub fn pre_multiplied(&self, rigid: &Matrix4<f64>) -> Self {
        Self {
            transforms: self.transforms.iter().map(|t| rigid * t).collect(),
        }
    }
}

fn axis_angle_matrix(r: &Vec3) -> Matrix4<f64> {
    let angle = r.norm();
    if angle < 1e-12 {
        return Matrix4::identity();
    }
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*r), angle);
    rot.to_homogeneous()
}

fn translation(t: &Vec3) -> Matrix4<f64> {
    Matrix4::new_translation(t)
}

/// Poses the skeleton: child world transform = parent world ∘ local, with
/// the local transform rotating about the joint's rest position. Returns the
/// skinning matrices `world(pose) ∘ world(rest)^-1`, which are identity at
/// the identity pose.
pub fn forward_kinematics(skeleton: &Skeleton, pose: &Pose) -> Result<JointTransforms> {
    pose.validate(skeleton)?;
    let k = skeleton.joint_count();
    let mut world = vec![Matrix4::<f64>::identity(); k];
    for i in 0..k {
        let local = translation(&skeleton.rest_offsets()[i]) * axis_angle_matrix(&pose.rotations[i]);
        world[i] = match skeleton.parent(i) {
            None => translation(&pose.root_translation) * local,
            Some(p) => world[p] * local,
        };
    }
    let rest = skeleton.rest_positions();
    let transforms = world
        .into_iter()
        .zip(&rest)
        .map(|(w, r)| w * translation(&-r))
        .collect();
    Ok(JointTransforms { transforms })
}

/// Posed world positions of all joints.
pub fn posed_joint_positions(skeleton: &Skeleton, pose: &Pose) -> Result<Vec<Vec3>> {
    let tfs = forward_kinematics(skeleton, pose)?;
    Ok(skeleton
        .rest_positions()
        .iter()
        .zip(tfs.transforms())
        .map(|(p, t)| t.transform_point(&(*p).into()).coords)
        .collect())
}
