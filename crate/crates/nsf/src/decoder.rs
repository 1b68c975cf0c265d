use rand::Rng;

use nsf_autodiff::{Activation, Mlp, Tensor};
use nsf_skeleton::Pose;

use crate::POSE_FEATURE_DIM;

/// Shared pose-conditioned deformation decoder: a small MLP embeds the
/// flattened joint rotations (root translation excluded), and the
/// deformation net maps `surface feature ⊕ pose feature` to a canonical
/// displacement. The final layer starts at zero so a fresh model deforms
/// nothing.
#[derive(Debug, Clone)]
pub struct PoseDecoder {
    pub pose_encoder: Mlp,
    pub deform: Mlp,
    joint_count: usize,
}

impl PoseDecoder {
    pub fn new<R: Rng>(joint_count: usize, feature_dim: usize, rng: &mut R) -> Self {
        let pose_encoder = Mlp::new(
            &[joint_count * 3, POSE_FEATURE_DIM, POSE_FEATURE_DIM],
            Activation::Relu,
            rng,
        );
        let mut deform = Mlp::new(
            &[feature_dim + POSE_FEATURE_DIM, 128, 128, 128, 128, 3],
            Activation::Relu,
            rng,
        );
        deform.zero_final_layer();
        Self {
            pose_encoder,
            deform,
            joint_count,
        }
    }

    /// Reassembles a decoder from deserialized networks.
    pub fn from_parts(pose_encoder: Mlp, deform: Mlp, joint_count: usize) -> Self {
        assert_eq!(pose_encoder.input_dim(), joint_count * 3);
        Self {
            pose_encoder,
            deform,
            joint_count,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn feature_dim(&self) -> usize {
        self.deform.input_dim() - POSE_FEATURE_DIM
    }

    /// Deterministic pose embedding from the flattened axis-angle vector.
    pub fn encode_pose(&self, pose: &Pose) -> Vec<f32> {
        let flat = pose.flattened_rotations();
        assert_eq!(flat.len(), self.joint_count * 3, "pose joint count mismatch");
        self.pose_encoder.forward_one(&flat)
    }

    /// Batched displacement: rows are `feature ⊕ pose-feature` inputs.
    pub fn displacements(&self, inputs: &Tensor) -> Tensor {
        self.deform.forward(inputs)
    }

    /// Combined checksum over encoder and deformation parameters.
    pub fn checksum(&self) -> u64 {
        self.pose_encoder.checksum() ^ self.deform.checksum().rotate_left(17)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.pose_encoder.params_mut();
        p.extend(self.deform.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nsf_core::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pose(rotations: Vec<Vec3>) -> Pose {
        Pose {
            rotations,
            root_translation: Vec3::new(9.0, 9.0, 9.0), // must be ignored
        }
    }

    #[test]
    fn encoding_is_deterministic_and_ignores_root_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dec = PoseDecoder::new(5, 64, &mut rng);
        let p1 = pose(vec![Vec3::new(0.1, 0.2, 0.3); 5]);
        let e1 = dec.encode_pose(&p1);
        let e2 = dec.encode_pose(&p1);
        assert_eq!(e1, e2);

        let mut p2 = p1.clone();
        p2.root_translation = Vec3::zeros();
        assert_eq!(dec.encode_pose(&p2), e1);
        assert_eq!(e1.len(), POSE_FEATURE_DIM);
        assert!(e1.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn distinct_poses_encode_distinctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dec = PoseDecoder::new(5, 64, &mut rng);
        let a = dec.encode_pose(&pose(vec![Vec3::zeros(); 5]));
        let b = dec.encode_pose(&pose(vec![Vec3::new(0.4, 0.0, 0.0); 5]));
        let dist: f32 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!(dist > 0.0);
    }

    #[test]
    fn fresh_decoder_displaces_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dec = PoseDecoder::new(5, 64, &mut rng);
        let input = Tensor::from_vec(2, 128, vec![0.3; 256]);
        let out = dec.displacements(&input);
        assert!(out.data.iter().all(|&v| v == 0.0));
    }
}
