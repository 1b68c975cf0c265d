use nsf_core::{KnnIndex, Vec3};

use crate::{Result, SkeletonError};

const EXACT_HIT: f64 = 1e-12;

/// Skinning weights diffused from template surface samples: a query blends
/// the weight vectors of its `k_w` nearest basis points with inverse-distance
/// (power 2) weighting, renormalized to a convex combination.
#[derive(Debug, Clone)]
pub struct SkinningField {
    basis: Vec<Vec3>,
    weights: Vec<Vec<f64>>,
    index: KnnIndex,
    k_w: usize,
    joint_count: usize,
}

impl SkinningField {
    pub const DEFAULT_K: usize = 8;

    pub fn new(basis: Vec<Vec3>, weights: Vec<Vec<f64>>, k_w: usize) -> Result<Self> {
        if basis.is_empty() {
            return Err(SkeletonError::InvalidField("no basis points".into()));
        }
        if basis.len() != weights.len() {
            return Err(SkeletonError::InvalidField(
                "basis/weights length mismatch".into(),
            ));
        }
        if k_w == 0 {
            return Err(SkeletonError::InvalidField("k_w must be positive".into()));
        }
        let joint_count = weights[0].len();
        for (i, w) in weights.iter().enumerate() {
            if w.len() != joint_count {
                return Err(SkeletonError::InvalidField(format!(
                    "weight vector {i} has length {} != {joint_count}",
                    w.len()
                )));
            }
            if w.iter().any(|&v| v < 0.0) {
                return Err(SkeletonError::InvalidField(format!(
                    "weight vector {i} has negative entries"
                )));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(SkeletonError::InvalidField(format!(
                    "weight vector {i} sums to {sum}, expected 1"
                )));
            }
        }
        let index = KnnIndex::build(basis.clone())?;
        Ok(Self {
            basis,
            weights,
            index,
            k_w,
            joint_count,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    pub fn k_w(&self) -> usize {
        self.k_w
    }

    pub fn basis(&self) -> &[Vec3] {
        &self.basis
    }

    pub fn basis_weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Convex weight vector at an arbitrary point. Zero distance dominates:
    /// querying exactly at a basis point returns that point's weights.
    pub fn query_weights(&self, x: &Vec3) -> Vec<f64> {
        let hits = self.index.knn(x, self.k_w);
        if hits[0].1 < EXACT_HIT {
            return self.weights[hits[0].0].clone();
        }
        let mut out = vec![0.0; self.joint_count];
        let mut total = 0.0;
        for &(i, d) in &hits {
            let w = 1.0 / (d * d);
            total += w;
            for (o, &b) in out.iter_mut().zip(&self.weights[i]) {
                *o += w * b;
            }
        }
        for o in &mut out {
            *o /= total;
        }
        out
    }

    /// Dominant joint at a point (highest diffused weight, lowest index on
    /// ties).
    pub fn dominant_joint(&self, x: &Vec3) -> usize {
        let w = self.query_weights(x);
        let mut best = 0;
        for (i, &v) in w.iter().enumerate().skip(1) {
            if v > w[best] {
                best = i;
            }
        }
        best
    }
}
