use rand::Rng;
use rand_distr::{Distribution, Normal};

use nsf_autodiff::Tensor;
use nsf_core::{KnnIndex, TriMesh, Vec3};

use crate::{NsfError, Result};

const EXACT_HIT: f64 = 1e-12;

/// One surface query: the interpolated feature vector plus the three basis
/// indices and convex weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureQuery {
    pub feature: Vec<f32>,
    pub indices: [u32; 3],
    pub weights: [f32; 3],
}

/// Trainable feature matrix anchored at the fusion-mesh vertices of one
/// subject. Interpolation uses normalized inverse-distance weights over the
/// three nearest basis points; an exact hit short-circuits to that basis
/// feature. Ties break toward the lower basis index.
#[derive(Debug, Clone)]
pub struct SurfaceFeatures {
    basis: Vec<Vec3>,
    /// (N, D), trainable.
    pub features: Tensor,
    index: KnnIndex,
}

/// One feature vector per mesh vertex, initialized N(0, 0.01^2).
pub fn init_features<R: Rng>(mesh: &TriMesh, dim: usize, rng: &mut R) -> Result<SurfaceFeatures> {
    if mesh.vertices.is_empty() {
        return Err(NsfError::EmptyMesh);
    }
    let normal = Normal::new(0.0, 0.01).unwrap();
    let n = mesh.vertices.len();
    let features = Tensor::from_vec(
        n,
        dim,
        (0..n * dim).map(|_| normal.sample(rng) as f32).collect(),
    );
    SurfaceFeatures::from_parts(mesh.vertices.clone(), features)
}

impl SurfaceFeatures {
    pub fn from_parts(basis: Vec<Vec3>, features: Tensor) -> Result<Self> {
        if basis.len() < 3 {
            return Err(NsfError::TooFewBasisPoints(basis.len()));
        }
        if features.rows != basis.len() {
            return Err(NsfError::FeatureDim(features.rows, basis.len()));
        }
        let index = KnnIndex::build(basis.clone())?;
        Ok(Self {
            basis,
            features,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols
    }

    pub fn basis(&self) -> &[Vec3] {
        &self.basis
    }

    /// Interpolation support at a point: three nearest basis indices and
    /// their convex weights, without touching the feature values.
    pub fn interpolation(&self, x: &Vec3) -> ([u32; 3], [f32; 3]) {
        let hits = self.index.knn(x, 3);
        debug_assert_eq!(hits.len(), 3);
        let indices = [hits[0].0 as u32, hits[1].0 as u32, hits[2].0 as u32];
        if hits[0].1 < EXACT_HIT {
            return (indices, [1.0, 0.0, 0.0]);
        }
        let raw = [
            1.0 / (hits[0].1 * hits[0].1),
            1.0 / (hits[1].1 * hits[1].1),
            1.0 / (hits[2].1 * hits[2].1),
        ];
        let total: f64 = raw.iter().sum();
        (
            indices,
            [
                (raw[0] / total) as f32,
                (raw[1] / total) as f32,
                (raw[2] / total) as f32,
            ],
        )
    }

    /// Full query: interpolated feature plus the support used.
    pub fn query(&self, x: &Vec3) -> FeatureQuery {
        let (indices, weights) = self.interpolation(x);
        let d = self.dim();
        let mut feature = vec![0.0f32; d];
        for (i, w) in indices.iter().zip(weights) {
            let row = self.features.row(*i as usize);
            for (f, &v) in feature.iter_mut().zip(row) {
                *f += w * v;
            }
        }
        FeatureQuery {
            feature,
            indices,
            weights,
        }
    }
}
