//! Training-quality checks on analytic sphere data: the one place in this
//! crate where the full decoder is actually optimized.

use nsf_core::{PointCloud, Vec3};
use nsf_fusion::{
    project_batch, train_fusion, FusionDataset, FusionModel, FusionTrainConfig, ProjectionParams,
    SubjectFrames,
};
use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const R0: f64 = 0.5;
const R1: f64 = 0.38;

fn sphere_cloud(radius: f64, count: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    while points.len() < count {
        let d = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if d.norm_squared() < 1e-6 || d.norm_squared() > 1.0 {
            continue;
        }
        let n = d.normalize();
        points.push(n * radius);
        normals.push(n);
    }
    PointCloud::new(points, normals).unwrap()
}

fn dataset() -> FusionDataset {
    FusionDataset {
        subjects: vec![
            SubjectFrames {
                id: "s0".into(),
                frames: (0..4).map(|f| sphere_cloud(R0, 800, 100 + f)).collect(),
            },
            SubjectFrames {
                id: "s1".into(),
                frames: (0..4).map(|f| sphere_cloud(R1, 800, 200 + f)).collect(),
            },
        ],
    }
}

fn fresh_model() -> FusionModel {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut model = FusionModel::new(&mut rng);
    model.register_subject("s0", &mut rng).unwrap();
    model.register_subject("s1", &mut rng).unwrap();
    model
}

fn train_cfg(seed: u64) -> FusionTrainConfig {
    FusionTrainConfig {
        steps: 600,
        surface_batch: 128,
        eikonal_batch: 128,
        seed,
        ..Default::default()
    }
}

static TRAINED: Lazy<FusionModel> = Lazy::new(|| {
    let mut model = fresh_model();
    train_fusion(&mut model, &dataset(), &train_cfg(7)).expect("training succeeds");
    model
});

#[test]
fn held_out_surface_points_read_near_zero() {
    let model = &*TRAINED;
    for (id, r) in [("s0", R0), ("s1", R1)] {
        let held_out = sphere_cloud(r, 600, 999);
        let vals = model.sdf_batch(id, &held_out.points).unwrap();
        let mean_abs: f64 = vals.iter().map(|v| v.abs()).sum::<f64>() / vals.len() as f64;
        assert!(mean_abs < 1e-2, "{id}: mean |sdf| on held-out surface = {mean_abs}");
    }
}

#[test]
fn eikonal_residual_is_small_in_the_box() {
    let model = &*TRAINED;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let pts: Vec<Vec3> = (0..10_000)
        .map(|_| {
            model.bbox.lerp(Vec3::new(
                rng.gen::<f64>(),
                rng.gen::<f64>(),
                rng.gen::<f64>(),
            ))
        })
        .collect();
    let (_, grads) = model.sdf_with_grad_batch("s0", &pts).unwrap();
    let mean_residual: f64 =
        grads.iter().map(|g| (g.norm() - 1.0).abs()).sum::<f64>() / grads.len() as f64;
    assert!(mean_residual < 0.1, "mean eikonal residual {mean_residual}");
}

#[test]
fn gradients_point_radially_and_match_finite_differences() {
    let model = &*TRAINED;
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut good = 0usize;
    let total = 400usize;
    for _ in 0..total {
        let dir = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let x = dir * rng.gen_range(0.3..0.8);
        let g = model.sdf_grad("s0", &x).unwrap();
        let cos = g.normalize().dot(&dir).clamp(-1.0, 1.0);
        if cos.acos().to_degrees() < 5.0 {
            good += 1;
        }
    }
    assert!(
        good as f64 >= 0.95 * total as f64,
        "radial gradient direction for only {good}/{total}"
    );

    // Central differences through the f64-shadowed graph, dividing by the
    // f32 step actually applied.
    let eval_precise = |x: &Vec3| -> f64 {
        let mut g = nsf_autodiff::Graph::new_precise();
        let binding = model.decoder.bind(&mut g);
        let input_t = model.input_matrix("s0", std::slice::from_ref(x)).unwrap();
        let input = g.leaf_tensor(&input_t);
        let (out, _) = model.decoder.forward_graph(&mut g, &binding, input);
        g.value_scalar_f64(out)
    };
    let h = 1e-4f64;
    for i in 0..20 {
        let dir = Vec3::new((i as f64).sin(), (i as f64 * 1.7).cos(), 0.4).normalize();
        let x = dir * 0.55;
        let g = model.sdf_grad("s0", &x).unwrap();
        let mut fd = Vec3::zeros();
        for c in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let step = (xp[c] as f32 as f64) - (xm[c] as f32 as f64);
            fd[c] = (eval_precise(&xp) - eval_precise(&xm)) / step;
        }
        let rel = (fd - g).norm() / g.norm().max(1e-9);
        assert!(rel < 1e-3, "finite-difference mismatch {rel} at {x:?}");
    }
}

#[test]
fn projection_lands_on_the_learned_sphere() {
    let model = &*TRAINED;
    let params = ProjectionParams::default();

    let x = Vec3::new(0.7, 0.0, 0.0);
    let out = nsf_fusion::project_to_surface(model, "s0", &x, &params).unwrap();
    assert!(
        (out.norm() - R0).abs() < 5e-3,
        "projected radius {} expected {R0}",
        out.norm()
    );
    assert!(
        out.normalize().dot(&Vec3::x()) > 0.999,
        "displacement not radial: {out:?}"
    );

    // Band points: |f| <= 5 cm must project to |f| < 1e-3 within 8 steps.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut band = Vec::new();
    while band.len() < 1000 {
        let p = Vec3::new(
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
            rng.gen_range(-0.8..0.8),
        );
        if model.sdf_eval("s0", &p).unwrap().abs() <= 0.05 {
            band.push(p);
        }
    }
    let before = model.sdf_batch("s0", &band).unwrap();
    let out = project_batch(model, "s0", &band, &params).unwrap();
    let after = model.sdf_batch("s0", &out).unwrap();
    let mut converged = 0usize;
    for (b, a) in before.iter().zip(&after) {
        assert!(a.abs() <= b.abs() + 1e-9, "projection residual grew: {b} -> {a}");
        if a.abs() < 1e-3 {
            converged += 1;
        }
    }
    assert!(
        converged as f64 >= 0.99 * band.len() as f64,
        "{converged}/{} band points converged",
        band.len()
    );
}

/// Radius at which the subject's SDF crosses zero along a direction.
fn radial_zero(model: &FusionModel, id: &str, dir: &Vec3) -> f64 {
    let (mut lo, mut hi) = (0.05f64, 0.9f64);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if model.sdf_eval(id, &(dir * mid)).unwrap() < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn different_codes_give_different_zero_sets() {
    let model = &*TRAINED;
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut sep = 0.0;
    let dirs = 64;
    for _ in 0..dirs {
        let d = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        sep += (radial_zero(model, "s0", &d) - radial_zero(model, "s1", &d)).abs();
    }
    sep /= dirs as f64;
    assert!(
        sep > 0.05,
        "zero sets of differently trained subjects too close: {sep}"
    );
}

#[test]
fn sign_is_consistent_along_normals() {
    let model = &*TRAINED;
    let probe = sphere_cloud(R0, 500, 55);
    let delta = 0.02;
    let mut ok = 0usize;
    for (p, n) in probe.points.iter().zip(&probe.normals) {
        let outside = model.sdf_eval("s0", &(p + n * delta)).unwrap();
        let inside = model.sdf_eval("s0", &(p - n * delta)).unwrap();
        if outside > 0.0 && inside < 0.0 {
            ok += 1;
        }
    }
    assert!(
        ok as f64 >= 0.95 * probe.len() as f64,
        "sign consistency only {ok}/{}",
        probe.len()
    );
}

#[test]
fn training_is_shuffle_insensitive_in_expectation() {
    // Same initialization, different sampling seed: the learned zero sets
    // must agree to millimeters.
    let reference = &*TRAINED;
    let mut other = fresh_model();
    train_fusion(&mut other, &dataset(), &train_cfg(8)).expect("training succeeds");

    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut worst = 0.0f64;
    for _ in 0..48 {
        let d = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalize();
        let gap = (radial_zero(reference, "s0", &d) - radial_zero(&other, "s0", &d)).abs();
        worst = worst.max(gap);
    }
    assert!(worst < 5e-3, "zero sets drifted {worst} m between shuffles");
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let mut model = fresh_model();
    model.code_mut("s0").unwrap().h.data[0] = f32::INFINITY;
    let err = train_fusion(&mut model, &dataset(), &train_cfg(9)).unwrap_err();
    assert!(err.to_string().contains("non-finite"), "got: {err}");
}
