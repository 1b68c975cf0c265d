use nsf_core::Vec3;
use nsf_skeleton::Pose;

use crate::ToyBody;

/// Softmax temperature over capsule distances, meters. Keeps the blend
/// local to the nearest bone while staying smooth across capsule seams.
const BLEND_TAU: f64 = 0.04;

/// Procedural pose-dependent "cloth" deformation in canonical space. Each
/// capsule contributes `amplitude * sin(bend angle of its joint) * mask(u)`
/// along its outward normal, where `u` is the normalized position along the
/// bone and `mask(u) = sin^2(pi f u)` vanishes at the joints; contributions
/// blend with softmax weights over capsule distances. The zero pose deforms
/// nothing.
pub fn apply_procedural_deformation(points: &[Vec3], pose: &Pose, body: &ToyBody) -> Vec<Vec3> {
    points
        .iter()
        .map(|p| p + displacement(p, pose, body))
        .collect()
}

/// The displacement field itself (see [`apply_procedural_deformation`]).
pub fn displacement(x: &Vec3, pose: &Pose, body: &ToyBody) -> Vec3 {
    let tau = BLEND_TAU * body.spec.scale;
    let dists: Vec<f64> = body.capsules.iter().map(|c| c.sdf(x)).collect();
    let nearest = dists.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut total = Vec3::zeros();
    let mut weight_sum = 0.0;
    for (capsule, d) in body.capsules.iter().zip(&dists) {
        let w = (-(d - nearest) / tau).exp();
        weight_sum += w;
        let bend = pose.rotations[capsule.joint].norm();
        if bend == 0.0 || w < 1e-12 {
            continue;
        }
        let (_, u) = capsule.closest(x);
        let mask = (std::f64::consts::PI * body.spec.bulge_frequency * u)
            .sin()
            .powi(2);
        let axis_point = capsule.a + (capsule.b - capsule.a) * u;
        let radial = x - axis_point;
        let len = radial.norm();
        if len < 1e-9 {
            continue;
        }
        total += radial / len * (w * body.spec.bulge_amplitude * bend.sin() * mask);
    }
    total / weight_sum
}
