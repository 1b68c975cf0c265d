use nalgebra::Matrix4;
use nsf_core::Vec3;
use rayon::prelude::*;

use crate::{JointTransforms, Result, SkeletonError};

/// Convex blend of the joint transforms: `M = sum_i w_i G_i`.
pub fn blend_transforms(transforms: &JointTransforms, weights: &[f64]) -> Result<Matrix4<f64>> {
    if weights.len() != transforms.joint_count() {
        return Err(SkeletonError::WeightLength(
            weights.len(),
            transforms.joint_count(),
        ));
    }
    let mut m = Matrix4::zeros();
    for (w, t) in weights.iter().zip(transforms.transforms()) {
        if *w != 0.0 {
            m += t * *w;
        }
    }
    Ok(m)
}

/// Linear blend skinning: each point moves by its convex combination of the
/// joint transforms, in homogeneous coordinates.
pub fn lbs_forward(
    points: &[Vec3],
    weights: &[Vec<f64>],
    transforms: &JointTransforms,
) -> Result<Vec<Vec3>> {
    if points.len() != weights.len() {
        return Err(SkeletonError::WeightLength(weights.len(), points.len()));
    }
    for w in weights {
        if w.len() != transforms.joint_count() {
            return Err(SkeletonError::WeightLength(w.len(), transforms.joint_count()));
        }
    }
    Ok(points
        .par_iter()
        .zip(weights.par_iter())
        .map(|(p, w)| {
            let m = blend_transforms(transforms, w).expect("validated above");
            m.transform_point(&(*p).into()).coords
        })
        .collect())
}

/// Pushes a canonical normal through the posing map: `n' = A^{-T} n`,
/// renormalized, where `A` is the linear block of the blended transform.
pub fn pose_normal(blended: &Matrix4<f64>, normal: &Vec3) -> Option<Vec3> {
    let a = blended.fixed_view::<3, 3>(0, 0).into_owned();
    let inv = a.try_inverse()?;
    let n = inv.transpose() * normal;
    let len = n.norm();
    (len > 1e-12).then(|| n / len)
}

/// Inverse of [`pose_normal`]: maps an observed (posed) normal back to
/// canonical space via `n^c = A^T n`, renormalized.
pub fn unpose_normal(blended: &Matrix4<f64>, normal: &Vec3) -> Option<Vec3> {
    let a = blended.fixed_view::<3, 3>(0, 0).into_owned();
    let n = a.transpose() * normal;
    let len = n.norm();
    (len > 1e-12).then(|| n / len)
}
