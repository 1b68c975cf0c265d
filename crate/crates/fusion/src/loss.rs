use nsf_autodiff::{Graph, MlpBinding, NodeId};
use nsf_core::Vec3;

use crate::{FusionError, FusionModel, Result};

/// One subject's contribution to a training step: canonicalized surface
/// points with canonical normals, plus off-surface eikonal samples.
#[derive(Debug, Clone)]
pub struct FusionBatch {
    pub subject: String,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub eikonal: Vec<Vec3>,
}

/// Loss values: `total = geo + lambda_eik * eik`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionLossTerms {
    pub total: f64,
    pub geo: f64,
    pub eik: f64,
}

pub(crate) struct FusionLossGraph {
    pub total: NodeId,
    pub geo: NodeId,
    pub eik: NodeId,
    pub decoder_binding: MlpBinding,
    /// Code leaf per batch, aligned with the input batches.
    pub code_nodes: Vec<NodeId>,
}

/// Builds the full loss graph:
/// geo = mean over surface points of |f| + lambda_normal * |grad f - n|,
/// eik = mean over eikonal samples of (|grad f| - 1)^2.
pub(crate) fn build_fusion_loss(
    g: &mut Graph,
    model: &FusionModel,
    batches: &[FusionBatch],
    lambda_eik: f32,
    lambda_normal: f32,
) -> Result<FusionLossGraph> {
    if batches.is_empty() || batches.iter().any(|b| b.points.is_empty()) {
        return Err(FusionError::EmptyBatch);
    }
    for b in batches {
        if b.points.len() != b.normals.len() {
            return Err(FusionError::EmptyBatch);
        }
    }

    let binding = model.decoder.bind(g);
    let mut code_nodes = Vec::with_capacity(batches.len());

    let mut geo_sums: Vec<NodeId> = Vec::new();
    let mut eik_sums: Vec<NodeId> = Vec::new();
    let mut surface_count = 0usize;
    let mut eik_count = 0usize;

    for batch in batches {
        let code = model.code(&batch.subject)?;
        let code_node = g.leaf_tensor(&code.h);
        code_nodes.push(code_node);

        // Surface pass.
        let b = batch.points.len();
        let x = g.leaf(b, 3, &flatten(&batch.points));
        let code_rows = g.broadcast_row(code_node, b)?;
        let input = g.concat_cols(x, code_rows)?;
        let (f, preacts) = model.decoder.forward_graph(g, &binding, input);
        let grad_full = model.decoder.input_gradient_graph(g, &binding, &preacts, b);
        let grad_x = g.slice_cols(grad_full, 0, 3)?;

        let abs_f = g.abs(f);
        let abs_sum = g.sum(abs_f);

        let n = g.leaf(b, 3, &flatten(&batch.normals));
        let diff = g.sub(grad_x, n)?;
        let diff_norm = g.row_norm(diff);
        let diff_sum = g.sum(diff_norm);
        let weighted = g.scale(diff_sum, lambda_normal);
        let geo = g.add(abs_sum, weighted)?;
        geo_sums.push(geo);
        surface_count += b;

        // Eikonal pass.
        if !batch.eikonal.is_empty() {
            let e = batch.eikonal.len();
            let xe = g.leaf(e, 3, &flatten(&batch.eikonal));
            let code_rows = g.broadcast_row(code_node, e)?;
            let input_e = g.concat_cols(xe, code_rows)?;
            let (_, preacts_e) = model.decoder.forward_graph(g, &binding, input_e);
            let grad_full_e = model
                .decoder
                .input_gradient_graph(g, &binding, &preacts_e, e);
            let grad_xe = g.slice_cols(grad_full_e, 0, 3)?;
            let norms = g.row_norm(grad_xe);
            let centered = g.add_scalar(norms, -1.0);
            let sq = g.square(centered);
            eik_sums.push(g.sum(sq));
            eik_count += e;
        }
    }

    let geo_total = sum_nodes(g, &geo_sums)?;
    let geo = g.scale(geo_total, 1.0 / surface_count as f32);

    let eik = if eik_count > 0 {
        let eik_total = sum_nodes(g, &eik_sums)?;
        g.scale(eik_total, 1.0 / eik_count as f32)
    } else {
        g.scalar(0.0)
    };

    let eik_weighted = g.scale(eik, lambda_eik);
    let total = g.add(geo, eik_weighted)?;
    Ok(FusionLossGraph {
        total,
        geo,
        eik,
        decoder_binding: binding,
        code_nodes,
    })
}

/// Evaluates the fusion objective without touching parameters.
pub fn fusion_loss(
    model: &FusionModel,
    batches: &[FusionBatch],
    lambda_eik: f32,
    lambda_normal: f32,
) -> Result<FusionLossTerms> {
    let mut g = Graph::new();
    let built = build_fusion_loss(&mut g, model, batches, lambda_eik, lambda_normal)?;
    Ok(FusionLossTerms {
        total: g.value_scalar(built.total) as f64,
        geo: g.value_scalar(built.geo) as f64,
        eik: g.value_scalar(built.eik) as f64,
    })
}

pub(crate) fn flatten(points: &[Vec3]) -> Vec<f32> {
    let mut out = Vec::with_capacity(points.len() * 3);
    for p in points {
        out.push(p.x as f32);
        out.push(p.y as f32);
        out.push(p.z as f32);
    }
    out
}

fn sum_nodes(g: &mut Graph, nodes: &[NodeId]) -> Result<NodeId> {
    let mut acc = nodes[0];
    for &n in &nodes[1..] {
        acc = g.add(acc, n)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::LATENT_DIM;
    use nsf_autodiff::{Activation, Layer, Mlp, Tensor};

    const INPUT_DIM: usize = 3 + LATENT_DIM;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Decoder computing f(x) = 2z exactly.
    fn scaled_slab_model() -> FusionModel {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut model = FusionModel::new(&mut rng);
        let mut w = Tensor::zeros(INPUT_DIM, 1);
        w.data[2] = 2.0;
        model.decoder = Mlp {
            layers: vec![Layer {
                w,
                b: Tensor::zeros(1, 1),
                act: Activation::None,
            }],
        };
        model.register_subject("s", &mut rng).unwrap();
        model
    }

    #[test]
    fn perfect_sdf_on_surface_has_zero_geo() {
        // f = 2z restricted to its zero set z=0, with matching normals
        // (0,0,2)... the true SDF normal is (0,0,1) only when |grad|=1, so
        // use f(x)=z instead for the zero-geo check.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut model = FusionModel::new(&mut rng);
        let mut w = Tensor::zeros(INPUT_DIM, 1);
        w.data[2] = 1.0;
        model.decoder = Mlp {
            layers: vec![Layer {
                w,
                b: Tensor::zeros(1, 1),
                act: Activation::None,
            }],
        };
        model.register_subject("s", &mut rng).unwrap();

        let batch = FusionBatch {
            subject: "s".into(),
            points: vec![Vec3::new(0.3, 0.4, 0.0), Vec3::new(-0.7, 0.1, 0.0)],
            normals: vec![Vec3::z(), Vec3::z()],
            eikonal: vec![],
        };
        let terms = fusion_loss(&model, &[batch], 0.1, 1.0).unwrap();
        assert!(terms.geo.abs() < 1e-6, "geo = {}", terms.geo);
        assert!(terms.total.abs() < 1e-6);
    }

    #[test]
    fn wrong_scale_sdf_pays_unit_eikonal() {
        // f = 2z has |grad| = 2 everywhere, so each eikonal sample
        // contributes (2 - 1)^2 = 1.
        let model = scaled_slab_model();
        let batch = FusionBatch {
            subject: "s".into(),
            points: vec![Vec3::new(0.0, 0.0, 0.0)],
            normals: vec![Vec3::z()],
            eikonal: vec![
                Vec3::new(0.1, 0.2, 0.3),
                Vec3::new(-0.5, 0.0, 0.9),
                Vec3::new(0.4, -0.4, -0.2),
            ],
        };
        let terms = fusion_loss(&model, &[batch], 0.1, 1.0).unwrap();
        assert!((terms.eik - 1.0).abs() < 1e-6, "eik = {}", terms.eik);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let model = scaled_slab_model();
        assert!(matches!(
            fusion_loss(&model, &[], 0.1, 1.0),
            Err(FusionError::EmptyBatch)
        ));
        let empty = FusionBatch {
            subject: "s".into(),
            points: vec![],
            normals: vec![],
            eikonal: vec![],
        };
        assert!(matches!(
            fusion_loss(&model, &[empty], 0.1, 1.0),
            Err(FusionError::EmptyBatch)
        ));
    }

    #[test]
    fn total_is_geo_plus_weighted_eik() {
        let model = scaled_slab_model();
        let batch = FusionBatch {
            subject: "s".into(),
            points: vec![Vec3::new(0.0, 0.0, 0.25)],
            normals: vec![Vec3::z()],
            eikonal: vec![Vec3::new(0.0, 0.0, 0.5)],
        };
        let terms = fusion_loss(&model, &[batch], 0.1, 1.0).unwrap();
        assert!((terms.total - (terms.geo + 0.1 * terms.eik)).abs() < 1e-6);
        // geo = |0.5| + |(0,0,2)-(0,0,1)| = 0.5 + 1.0
        assert!((terms.geo - 1.5).abs() < 1e-6, "geo = {}", terms.geo);
    }
}
