use nalgebra::Matrix4;
use nsf_core::{PointCloud, Vec3};
use rayon::prelude::*;

use crate::lbs::{blend_transforms, unpose_normal};
use crate::{JointTransforms, Result, SkinningField};

/// Root-finding schedule for [`canonicalize`].
#[derive(Debug, Clone, Copy)]
pub struct CanonicalizeParams {
    pub max_iter: usize,
    /// Residual threshold in meters.
    pub eps: f64,
    /// Damping of the fixed-point update.
    pub step: f64,
}

impl Default for CanonicalizeParams {
    fn default() -> Self {
        Self {
            max_iter: 20,
            eps: 1e-5,
            step: 1.0,
        }
    }
}

/// Canonicalization result. Points keep their input order; `converged[i]`
/// marks whether the root search met the residual threshold (unconverged
/// points are excluded from training batches downstream).
#[derive(Debug, Clone)]
pub struct Canonicalized {
    pub cloud: PointCloud,
    pub converged: Vec<bool>,
    /// Residual `|M(x^c) x^c - x|` actually reached, per point.
    pub residuals: Vec<f64>,
}

impl Canonicalized {
    pub fn converged_count(&self) -> usize {
        self.converged.iter().filter(|&&c| c).count()
    }
}

/// Maps posed observations back to canonical space by inverting linear blend
/// skinning with damped fixed-point iteration, and carries normals along
/// through the inverse of the blended linear map.
///
/// Initialization takes the rigid inverse under the dominant-weight joint:
/// each joint's inverse transform proposes a candidate, and the candidate at
/// which that joint's own diffused weight is highest wins.
pub fn canonicalize(
    observation: &PointCloud,
    transforms: &JointTransforms,
    field: &SkinningField,
    params: &CanonicalizeParams,
) -> Result<Canonicalized> {
    observation.validate()?;
    let inverses: Vec<Matrix4<f64>> = transforms
        .transforms()
        .iter()
        .map(|t| t.try_inverse().expect("rigid transforms are invertible"))
        .collect();

    let results: Vec<(Vec3, Vec3, bool, f64)> = observation
        .points
        .par_iter()
        .zip(observation.normals.par_iter())
        .map(|(x, n)| canonicalize_point(x, n, transforms, &inverses, field, params))
        .collect();

    let mut points = Vec::with_capacity(results.len());
    let mut normals = Vec::with_capacity(results.len());
    let mut converged = Vec::with_capacity(results.len());
    let mut residuals = Vec::with_capacity(results.len());
    for (p, n, c, r) in results {
        points.push(p);
        normals.push(n);
        converged.push(c);
        residuals.push(r);
    }
    Ok(Canonicalized {
        cloud: PointCloud {
            points,
            normals,
            colors: observation.colors.clone(),
        },
        converged,
        residuals,
    })
}

fn canonicalize_point(
    x: &Vec3,
    n: &Vec3,
    transforms: &JointTransforms,
    inverses: &[Matrix4<f64>],
    field: &SkinningField,
    params: &CanonicalizeParams,
) -> (Vec3, Vec3, bool, f64) {
    // Candidate roots from each joint's rigid inverse; keep the one whose
    // joint dominates the local skinning weights.
    let mut init = inverses[0].transform_point(&(*x).into()).coords;
    let mut best_score = f64::NEG_INFINITY;
    for (j, inv) in inverses.iter().enumerate() {
        let cand = inv.transform_point(&(*x).into()).coords;
        let w = field.query_weights(&cand);
        if w[j] > best_score {
            best_score = w[j];
            init = cand;
        }
    }

    let residual_of = |p: &Vec3| -> (f64, Matrix4<f64>) {
        let w = field.query_weights(p);
        let m = blend_transforms(transforms, &w).expect("field joint count matches");
        let r = (m.transform_point(&(*p).into()).coords - x).norm();
        (r, m)
    };

    let mut cur = init;
    let (mut cur_res, mut cur_m) = residual_of(&cur);
    for _ in 0..params.max_iter {
        if cur_res < params.eps {
            break;
        }
        // Damped fixed-point proposal with step halving so the residual
        // never increases across accepted iterations.
        let mut lambda = params.step;
        let mut accepted = false;
        for _ in 0..4 {
            let Some(inv) = cur_m.try_inverse() else { break };
            let target = inv.transform_point(&(*x).into()).coords;
            let proposal = cur + (target - cur) * lambda;
            let (res, m) = residual_of(&proposal);
            if res < cur_res {
                cur = proposal;
                cur_res = res;
                cur_m = m;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let converged = cur_res < params.eps;
    let n_c = unpose_normal(&cur_m, n).unwrap_or(*n);
    (cur, n_c, converged, cur_res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{forward_kinematics, lbs_forward, Pose, Skeleton};
    use approx::assert_relative_eq;

    fn single_joint_field() -> SkinningField {
        let basis = vec![
            Vec3::zeros(),
            Vec3::new(0.5, 0.0, 0.0),
            Vec3::new(0.0, 0.5, 0.0),
            Vec3::new(0.0, 0.0, 0.5),
        ];
        SkinningField::new(basis, vec![vec![1.0]; 4], 2).unwrap()
    }

    #[test]
    fn identity_pose_is_a_fixed_point() {
        let sk = Skeleton::new(vec![None], vec![Vec3::zeros()]).unwrap();
        let tfs = forward_kinematics(&sk, &Pose::identity(1)).unwrap();
        let field = single_joint_field();
        let cloud = PointCloud::new(
            vec![Vec3::new(0.2, 0.3, 0.1), Vec3::new(-0.4, 0.0, 0.2)],
            vec![Vec3::z(), Vec3::x()],
        )
        .unwrap();
        let out = canonicalize(&cloud, &tfs, &field, &CanonicalizeParams::default()).unwrap();
        assert_eq!(out.converged, vec![true, true]);
        for (a, b) in out.cloud.points.iter().zip(&cloud.points) {
            assert_relative_eq!(*a, *b, epsilon = 1e-9);
        }
        for (a, b) in out.cloud.normals.iter().zip(&cloud.normals) {
            assert_relative_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn rigid_single_joint_inverts_exactly() {
        // One joint, everything fully bound: canonicalization must produce
        // exactly T^{-1} x, and rotate normals by R^{-1}.
        let sk = Skeleton::new(vec![None], vec![Vec3::zeros()]).unwrap();
        let pose = Pose {
            rotations: vec![Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)],
            root_translation: Vec3::new(0.3, -0.1, 0.2),
        };
        let tfs = forward_kinematics(&sk, &pose).unwrap();
        let field = single_joint_field();

        let canonical_truth = Vec3::new(0.2, 0.1, 0.0);
        let posed = tfs.transform(0).transform_point(&canonical_truth.into()).coords;
        let normal_truth = Vec3::new(1.0, 0.0, 0.0);
        let posed_normal = tfs.transform(0).transform_vector(&normal_truth).normalize();

        let cloud = PointCloud::new(vec![posed], vec![posed_normal]).unwrap();
        let out = canonicalize(&cloud, &tfs, &field, &CanonicalizeParams::default()).unwrap();
        assert!(out.converged[0]);
        assert_relative_eq!(out.cloud.points[0], canonical_truth, epsilon = 1e-9);
        assert_relative_eq!(out.cloud.normals[0], normal_truth, epsilon = 1e-9);
    }

    #[test]
    fn round_trip_through_lbs_is_tight() {
        use rand::{Rng, SeedableRng};
        // Two-joint toy limb with smoothly varying weights along x.
        let sk = Skeleton::new(
            vec![None, Some(0)],
            vec![Vec3::zeros(), Vec3::new(0.5, 0.0, 0.0)],
        )
        .unwrap();
        let mut basis = Vec::new();
        let mut weights = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 39.0;
            basis.push(Vec3::new(t, 0.02 * (i % 3) as f64, 0.0));
            let w1 = (t * 1.2 - 0.1).clamp(0.0, 1.0);
            weights.push(vec![1.0 - w1, w1]);
        }
        let field = SkinningField::new(basis.clone(), weights.clone(), 8).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut all_ok = 0usize;
        let mut total = 0usize;
        for _ in 0..5 {
            let pose = Pose {
                rotations: vec![
                    Vec3::new(0.0, 0.0, rng.gen_range(-0.5..0.5)),
                    Vec3::new(0.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ],
                root_translation: Vec3::new(
                    rng.gen_range(-0.2..0.2),
                    rng.gen_range(-0.2..0.2),
                    0.0,
                ),
            };
            let tfs = forward_kinematics(&sk, &pose).unwrap();
            // Pose the template points with their own diffused weights so a
            // true root exists.
            let posed = lbs_forward(
                &basis,
                &basis.iter().map(|b| field.query_weights(b)).collect::<Vec<_>>(),
                &tfs,
            )
            .unwrap();
            let cloud =
                PointCloud::new(posed.clone(), vec![Vec3::z(); posed.len()]).unwrap();
            let out = canonicalize(&cloud, &tfs, &field, &CanonicalizeParams::default()).unwrap();

            for (i, (xc, ok)) in out.cloud.points.iter().zip(&out.converged).enumerate() {
                total += 1;
                if !ok {
                    continue;
                }
                let w = field.query_weights(xc);
                let back = lbs_forward(&[*xc], &[w], &tfs).unwrap()[0];
                if (back - posed[i]).norm() < 1e-4 {
                    all_ok += 1;
                }
            }
        }
        assert!(
            all_ok as f64 >= 0.99 * total as f64,
            "round trip tight for only {all_ok}/{total}"
        );
    }
}
