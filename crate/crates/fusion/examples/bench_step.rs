use std::time::Instant;
fn main() {
    use nsf_fusion::*;
    use nsf_core::{PointCloud, Vec3};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut model = FusionModel::new(&mut rng);
    model.register_subject("s", &mut rng).unwrap();
    let pts: Vec<Vec3> = (0..2048).map(|_| {
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        d * 0.5
    }).collect();
    let ns: Vec<Vec3> = pts.iter().map(|p| p.normalize()).collect();
    let cloud = PointCloud::new(pts, ns).unwrap();
    let dataset = FusionDataset { subjects: vec![SubjectFrames { id: "s".into(), frames: vec![cloud] }] };

    for (sb, eb, steps) in [(128usize, 128usize, 10usize), (256, 256, 10)] {
        let cfg = FusionTrainConfig { steps, surface_batch: sb, eikonal_batch: eb, seed: 7, ..Default::default() };
        let mut m = model.clone();
        let t0 = Instant::now();
        let stats = train_fusion(&mut m, &dataset, &cfg).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!("batch {sb}+{eb}: {:.3} s/step, last loss {:.4}", dt / steps as f64, stats.last().unwrap().total);
    }

    // Pure inference throughput (marching-cubes style chunked evaluation).
    let chunk: Vec<Vec3> = (0..8192).map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let t0 = Instant::now();
    let mut acc = 0.0;
    for _ in 0..10 { acc += model.sdf_batch("s", &chunk).unwrap()[0]; }
    let dt = t0.elapsed().as_secs_f64();
    let evals_per_s = 10.0 * 8192.0 / dt;
    println!("inference: {:.0} sdf evals/s ({acc:.3}), res128 grid would take {:.1} s", evals_per_s, 129f64.powi(3) / evals_per_s);
}
