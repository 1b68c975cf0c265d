use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use nsf_autodiff::{Adam, Graph};
use nsf_core::{Aabb, PointCloud, Vec3};

use crate::loss::{build_fusion_loss, FusionBatch};
use crate::{FusionError, FusionModel, Result};

/// Canonicalized training frames for one subject (converged points only).
#[derive(Debug, Clone)]
pub struct SubjectFrames {
    pub id: String,
    pub frames: Vec<PointCloud>,
}

/// Canonical-space training data across subjects.
#[derive(Debug, Clone, Default)]
pub struct FusionDataset {
    pub subjects: Vec<SubjectFrames>,
}

impl FusionDataset {
    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(
            self.subjects
                .iter()
                .flat_map(|s| s.frames.iter().flat_map(|f| f.points.iter())),
        )
    }
}

#[derive(Debug, Clone)]
pub struct FusionTrainConfig {
    pub steps: usize,
    pub surface_batch: usize,
    pub eikonal_batch: usize,
    pub lr_decoder: f32,
    pub lr_code: f32,
    /// lambda_1 on the eikonal term.
    pub lambda_eik: f32,
    /// lambda_3 on the normal-alignment term.
    pub lambda_normal: f32,
    /// Std-dev of the Gaussian eikonal samples around surface points, meters.
    pub eik_sigma: f64,
    /// Final/initial learning-rate ratio across the run.
    pub lr_decay: f32,
    pub seed: u64,
}

impl Default for FusionTrainConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            surface_batch: 256,
            eikonal_batch: 256,
            lr_decoder: 5e-4,
            lr_code: 1e-3,
            lambda_eik: 0.1,
            lambda_normal: 1.0,
            eik_sigma: 0.05,
            lr_decay: 0.1,
            seed: 0,
        }
    }
}

/// Per-step loss record.
#[derive(Debug, Clone, Copy)]
pub struct TrainStats {
    pub step: usize,
    pub total: f64,
    pub geo: f64,
    pub eik: f64,
}

/// Auto-decoder training: the shared decoder updates every step, each
/// subject's code updates on that subject's steps. Subjects rotate
/// round-robin; batches resample from the pooled canonical points.
pub fn train_fusion(
    model: &mut FusionModel,
    dataset: &FusionDataset,
    cfg: &FusionTrainConfig,
) -> Result<Vec<TrainStats>> {
    if dataset.subjects.is_empty() || dataset.subjects.iter().any(|s| s.frames.is_empty()) {
        return Err(FusionError::EmptyBatch);
    }
    for s in &dataset.subjects {
        if model.code(&s.id).is_err() {
            return Err(FusionError::UnknownSubject(s.id.clone()));
        }
    }
    let mut stats = Vec::new();
    if cfg.steps == 0 {
        return Ok(stats);
    }

    let bbox = dataset
        .bounding_box()
        .ok_or(FusionError::EmptyBatch)?
        .padded(0.1);
    model.bbox = bbox;

    // Pool points per subject once; batches sample from the pool.
    let pools: Vec<(String, Vec<(Vec3, Vec3)>)> = dataset
        .subjects
        .iter()
        .map(|s| {
            let pool: Vec<(Vec3, Vec3)> = s
                .frames
                .iter()
                .flat_map(|f| f.points.iter().copied().zip(f.normals.iter().copied()))
                .collect();
            (s.id.clone(), pool)
        })
        .collect();
    if pools.iter().any(|(_, p)| p.is_empty()) {
        return Err(FusionError::EmptyBatch);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam_decoder = Adam::new(cfg.lr_decoder);
    let mut adam_codes: Vec<Adam> = pools.iter().map(|_| Adam::new(cfg.lr_code)).collect();
    let gauss = Normal::new(0.0, cfg.eik_sigma).unwrap();

    for step in 0..cfg.steps {
        let si = step % pools.len();
        let (subject, pool) = &pools[si];

        let surface: Vec<(Vec3, Vec3)> = (0..cfg.surface_batch)
            .map(|_| *pool.choose(&mut rng).expect("pool nonempty"))
            .collect();
        let points: Vec<Vec3> = surface.iter().map(|(p, _)| *p).collect();
        let normals: Vec<Vec3> = surface.iter().map(|(_, n)| *n).collect();

        // Half the eikonal samples are uniform in the box, half Gaussian
        // around the batch's surface points.
        let mut eikonal = Vec::with_capacity(cfg.eikonal_batch);
        for i in 0..cfg.eikonal_batch {
            if i % 2 == 0 {
                eikonal.push(bbox.lerp(Vec3::new(rng.gen(), rng.gen(), rng.gen())));
            } else {
                let around = points[rng.gen_range(0..points.len())];
                eikonal.push(
                    around
                        + Vec3::new(
                            gauss.sample(&mut rng),
                            gauss.sample(&mut rng),
                            gauss.sample(&mut rng),
                        ),
                );
            }
        }

        let batch = FusionBatch {
            subject: subject.clone(),
            points,
            normals,
            eikonal,
        };

        let mut g = Graph::new();
        let built = build_fusion_loss(&mut g, model, &[batch], cfg.lambda_eik, cfg.lambda_normal)?;
        let total = g.value_scalar(built.total) as f64;
        if !total.is_finite() {
            return Err(FusionError::Diverged(format!(
                "non-finite loss at step {step} (subject {subject})"
            )));
        }
        g.backward(built.total)?;

        // Cosine-free exponential schedule from lr0 down to lr0 * lr_decay.
        let progress = step as f32 / cfg.steps as f32;
        let factor = cfg.lr_decay.powf(progress);
        adam_decoder.lr = cfg.lr_decoder * factor;
        adam_codes[si].lr = cfg.lr_code * factor;

        for t in model.decoder.params_mut() {
            t.zero_grad();
            t.grad_mut();
        }
        model.decoder.accumulate_grads(&g, &built.decoder_binding);
        adam_decoder.step(&mut model.decoder.params_mut());

        {
            let code = model.code_mut(subject)?;
            code.h.zero_grad();
            let grad = g.grad(built.code_nodes[0]);
            code.h.grad_mut().copy_from_slice(grad);
            adam_codes[si].step(&mut [&mut code.h]);
            code.clamp_norm();
        }

        stats.push(TrainStats {
            step,
            total,
            geo: g.value_scalar(built.geo) as f64,
            eik: g.value_scalar(built.eik) as f64,
        });
        if step % 100 == 0 {
            log::info!(
                "fusion step {step}/{}: total {total:.5} geo {:.5} eik {:.5}",
                cfg.steps,
                g.value_scalar(built.geo),
                g.value_scalar(built.eik)
            );
        }
    }
    Ok(stats)
}
