use nsf_core::Vec3;

use crate::{FusionError, FusionModel, Result};

#[derive(Debug, Clone, Copy)]
pub struct ProjectionParams {
    pub max_steps: usize,
    /// |f| threshold declaring a point on-surface, meters.
    pub eps: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            max_steps: 8,
            eps: 1e-4,
        }
    }
}

/// Newton projection onto the SDF zero set:
/// `x <- x - f(x) grad f(x) / |grad f(x)|^2`, iterated until `|f| < eps` or
/// the step budget runs out, with step halving so the residual |f| never
/// increases across accepted steps. Points already on the surface return
/// unchanged.
pub fn project_to_surface(
    model: &FusionModel,
    subject: &str,
    x: &Vec3,
    params: &ProjectionParams,
) -> Result<Vec3> {
    let out = project_batch(model, subject, std::slice::from_ref(x), params)?;
    Ok(out[0])
}

/// Batched [`project_to_surface`]. Errors on a vanishing gradient at any
/// active iterate.
pub fn project_batch(
    model: &FusionModel,
    subject: &str,
    points: &[Vec3],
    params: &ProjectionParams,
) -> Result<Vec<Vec3>> {
    let mut current: Vec<Vec3> = points.to_vec();
    let (mut values, mut grads) = model.sdf_with_grad_batch(subject, &current)?;
    let mut active: Vec<usize> = (0..current.len())
        .filter(|&i| values[i].abs() >= params.eps)
        .collect();

    for _ in 0..params.max_steps {
        if active.is_empty() {
            break;
        }
        // Propose Newton steps for the active set, with halving on residual
        // increase.
        let mut proposals = Vec::with_capacity(active.len());
        for &i in &active {
            let g = grads[i];
            let g2 = g.norm_squared();
            if g2 < 1e-12 {
                return Err(FusionError::DegenerateGradient);
            }
            proposals.push(current[i] - g * (values[i] / g2));
        }
        let (prop_vals, prop_grads) =
            model.sdf_with_grad_batch(subject, &proposals)?;

        let mut still_active = Vec::new();
        let mut retry = Vec::new();
        for (slot, &i) in active.iter().enumerate() {
            if prop_vals[slot].abs() <= values[i].abs() {
                current[i] = proposals[slot];
                values[i] = prop_vals[slot];
                grads[i] = prop_grads[slot];
                if values[i].abs() >= params.eps {
                    still_active.push(i);
                }
            } else {
                retry.push(i);
            }
        }
        // Halved steps for the points whose full Newton step overshot.
        if !retry.is_empty() {
            let mut half_props = Vec::with_capacity(retry.len());
            for &i in &retry {
                let g = grads[i];
                let g2 = g.norm_squared();
                half_props.push(current[i] - g * (0.5 * values[i] / g2));
            }
            let (hv, hg) = model.sdf_with_grad_batch(subject, &half_props)?;
            for (slot, &i) in retry.iter().enumerate() {
                if hv[slot].abs() <= values[i].abs() {
                    current[i] = half_props[slot];
                    values[i] = hv[slot];
                    grads[i] = hg[slot];
                }
                // Either way the point stays active; a rejected step leaves
                // the iterate (and its residual) unchanged.
                if values[i].abs() >= params.eps {
                    still_active.push(i);
                }
            }
            still_active.sort_unstable();
        }
        active = still_active;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nsf_autodiff::{Activation, Layer, Mlp, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Model whose decoder is exactly f(x) = z (a linear slab).
    fn slab_model() -> FusionModel {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = FusionModel::new(&mut rng);
        let mut w = Tensor::zeros(3 + crate::LATENT_DIM, 1);
        w.data[2] = 1.0;
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
    fn on_surface_point_returns_unchanged() {
        let model = slab_model();
        let x = Vec3::new(0.4, -0.2, 0.0);
        let out = project_to_surface(&model, "s", &x, &ProjectionParams::default()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn slab_projects_along_z_in_one_step() {
        let model = slab_model();
        let x = Vec3::new(0.1, 0.7, 0.35);
        let out = project_to_surface(&model, "s", &x, &ProjectionParams::default()).unwrap();
        assert!((out - Vec3::new(0.1, 0.7, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn geometric_init_sphere_projects_radially() {
        // The untrained geometric-initialized decoder is already a usable
        // approximate sphere SDF; projection must move points onto roughly
        // radius 0.5 along the radial direction.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut model = FusionModel::new(&mut rng);
        model.register_subject("s", &mut rng).unwrap();

        let x = Vec3::new(0.7, 0.0, 0.0);
        let out = project_to_surface(&model, "s", &x, &ProjectionParams::default()).unwrap();
        let f = model.sdf_eval("s", &out).unwrap();
        assert!(f.abs() < 1e-4, "projected residual {f}");
        assert!((out.normalize() - Vec3::x()).norm() < 0.05, "{out:?} not radial");
        assert!((out.norm() - 0.5).abs() < 0.1, "radius {}", out.norm());
    }

    #[test]
    fn residual_contracts_for_band_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let mut model = FusionModel::new(&mut rng);
        model.register_subject("s", &mut rng).unwrap();
        use rand::Rng;

        let mut band = Vec::new();
        while band.len() < 200 {
            let p = Vec3::new(
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
            );
            if (model.sdf_eval("s", &p).unwrap()).abs() <= 0.05 {
                band.push(p);
            }
        }
        let before: Vec<f64> = model.sdf_batch("s", &band).unwrap();
        let out = project_batch(&model, "s", &band, &ProjectionParams::default()).unwrap();
        let after: Vec<f64> = model.sdf_batch("s", &out).unwrap();
        let mut ok = 0;
        for (b, a) in before.iter().zip(&after) {
            assert!(a.abs() <= b.abs() + 1e-9, "residual grew: {b} -> {a}");
            if a.abs() < 1e-3 {
                ok += 1;
            }
        }
        assert!(ok as f64 >= 0.99 * band.len() as f64, "{ok}/{} converged", band.len());
    }
}
