use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nsf_core::Vec3;
use nsf_skeleton::Pose;

/// Per-joint axis-angle sampling boxes for the five-joint rig, sized to keep
/// the limbs clear of the torso and of each other.
const JOINT_RANGES: [[(f64, f64); 3]; 5] = [
    // Root stays unrotated; articulation lives in the limbs.
    [(0.0, 0.0), (0.0, 0.0), (0.0, 0.0)],
    // Legs: forward/back kick about x, small scissor about z.
    [(-0.5, 0.5), (-0.2, 0.2), (-0.25, 0.25)],
    [(-0.5, 0.5), (-0.2, 0.2), (-0.25, 0.25)],
    // Arms: swing about z, twist about x/y.
    [(-0.4, 0.4), (-0.3, 0.3), (-0.7, 0.7)],
    [(-0.4, 0.4), (-0.3, 0.3), (-0.7, 0.7)],
];

const KEYFRAME_SPACING: usize = 15;

/// Procedural articulation: random joint targets every few frames with
/// linear interpolation in between, at a fixed root translation. Seeded and
/// deterministic.
pub fn generate_pose_sequence(
    frames: usize,
    root_translation: Vec3,
    seed: u64,
) -> Vec<Pose> {
    let joint_count = JOINT_RANGES.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keyframe_count = frames / KEYFRAME_SPACING + 2;
    let keyframes: Vec<Vec<Vec3>> = (0..keyframe_count)
        .map(|k| {
            (0..joint_count)
                .map(|j| {
                    if k == 0 {
                        // Sequences start at the rest pose.
                        return Vec3::zeros();
                    }
                    let r = &JOINT_RANGES[j];
                    Vec3::new(
                        sample(&mut rng, r[0]),
                        sample(&mut rng, r[1]),
                        sample(&mut rng, r[2]),
                    )
                })
                .collect()
        })
        .collect();

    (0..frames)
        .map(|f| {
            let k = f / KEYFRAME_SPACING;
            let t = (f % KEYFRAME_SPACING) as f64 / KEYFRAME_SPACING as f64;
            let rotations = (0..joint_count)
                .map(|j| keyframes[k][j] * (1.0 - t) + keyframes[k + 1][j] * t)
                .collect();
            Pose {
                rotations,
                root_translation,
            }
        })
        .collect()
}

fn sample<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}
