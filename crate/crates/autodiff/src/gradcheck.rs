use crate::graph::{Graph, NodeId};

/// Compares reverse-mode gradients against central finite differences.
///
/// `build` must construct a scalar-valued graph from a single `(1, n)` input
/// leaf. The step `h` is snapped to the nearest power of two so that the
/// difference quotient stays exact for linear functions. Returns the relative
/// error `||a - n||_2 / max(||a||_2, ||n||_2)` (zero when both vanish).
pub fn grad_check<F>(build: F, x: &[f32], h: f32) -> f32
where
    F: Fn(&mut Graph, NodeId) -> NodeId,
{
    let h = snap_pow2(h);

    let mut g = Graph::new();
    let input = g.leaf(1, x.len(), x);
    let out = build(&mut g, input);
    g.backward(out).expect("grad_check needs a scalar output");
    let analytic: Vec<f32> = g.grad(input).to_vec();

    // Difference quotients run on the f64-shadowed graph so that the
    // perturbed evaluations are not drowned by f32 rounding.
    let eval = |pt: &[f32]| -> f64 {
        let mut g = Graph::new_precise();
        let input = g.leaf(1, pt.len(), pt);
        let out = build(&mut g, input);
        g.value_scalar_f64(out)
    };

    let mut numeric = vec![0.0f64; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        // The perturbed coordinates round to f32; divide by the step that
        // was actually applied.
        let xp = orig + h;
        let xm = orig - h;
        probe[i] = xp;
        let fp = eval(&probe);
        probe[i] = xm;
        let fm = eval(&probe);
        probe[i] = orig;
        numeric[i] = (fp - fm) / (xp as f64 - xm as f64);
    }

    let na: f64 = analytic.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|&v| v * v).sum::<f64>().sqrt();
    let diff: f64 = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a as f64 - n) * (a as f64 - n))
        .sum::<f64>()
        .sqrt();
    let denom = na.max(nn);
    if denom < 1e-12 {
        return 0.0;
    }
    (diff / denom) as f32
}

fn snap_pow2(h: f32) -> f32 {
    2.0f32.powi(h.abs().max(f32::MIN_POSITIVE).log2().round() as i32)
}
