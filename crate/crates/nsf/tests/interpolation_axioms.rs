use nsf::SurfaceFeatures;
use nsf_autodiff::Tensor;
use nsf_core::Vec3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_basis(n: usize, seed: u64) -> (Vec<Vec3>, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis: Vec<Vec3> = (0..n)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let features = Tensor::from_vec(
        n,
        8,
        (0..n * 8).map(|_| rng.gen_range(-1.0f32..1.0)).collect(),
    );
    (basis, features)
}

#[test]
fn ten_thousand_randomized_queries_satisfy_the_axioms() {
    let (basis, features) = random_basis(400, 1);
    let f = SurfaceFeatures::from_parts(basis.clone(), features).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = 0usize;
    for i in 0..10_000 {
        let x = if i % 10 == 0 {
            // Exact basis hits interleaved with free queries.
            basis[rng.gen_range(0..basis.len())]
        } else {
            Vec3::new(
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
            )
        };
        let (idx, w) = f.interpolation(&x);
        let sum: f32 = w.iter().sum();
        let nonneg = w.iter().all(|&v| v >= 0.0);
        let normalized = (sum - 1.0).abs() <= 1e-6;
        let exact_ok = if (basis[idx[0] as usize] - x).norm() < 1e-12 {
            w == [1.0, 0.0, 0.0]
        } else {
            true
        };
        if !(nonneg && normalized && exact_ok) {
            failures += 1;
        }
    }
    assert_eq!(failures, 0, "{failures} interpolation axiom violations");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weights_are_convex_everywhere(
        seed in 0u64..500,
        qx in -2.0f64..2.0,
        qy in -2.0f64..2.0,
        qz in -2.0f64..2.0,
    ) {
        let (basis, features) = random_basis(40, seed);
        let f = SurfaceFeatures::from_parts(basis, features).unwrap();
        let (_, w) = f.interpolation(&Vec3::new(qx, qy, qz));
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f32>() - 1.0).abs() <= 1e-6);
    }

    /// Local Lipschitz continuity away from basis-point ties.
    #[test]
    fn interpolated_feature_is_locally_stable(seed in 0u64..200) {
        let (basis, features) = random_basis(60, seed);
        let f = SurfaceFeatures::from_parts(basis.clone(), features).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let x = Vec3::new(
            rng.gen_range(-0.9..0.9),
            rng.gen_range(-0.9..0.9),
            rng.gen_range(-0.9..0.9),
        );
        // Skip queries too close to any basis point or to a 3rd/4th
        // neighbor tie; the field is only Lipschitz away from those.
        let hits = nsf_core::build_knn_index(&basis).unwrap().knn(&x, 4);
        prop_assume!(hits[0].1 > 0.05);
        prop_assume!(hits[3].1 - hits[2].1 > 0.02);

        let q0 = f.query(&x).feature;
        let delta = 1e-5;
        let q1 = f.query(&(x + Vec3::new(delta, 0.0, 0.0))).feature;
        let diff: f32 = q0.iter().zip(&q1).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(diff < 1.0e3 * delta as f32, "feature jump {} for step {}", diff, delta);
    }
}
