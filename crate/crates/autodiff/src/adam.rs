use crate::tensor::Tensor;

struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
}

/// Adam with bias-corrected moment estimates. One instance owns the moment
/// buffers for a fixed, ordered parameter group; pass the same tensors in the
/// same order to every `step`.
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step_count: u64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update from each tensor's gradient buffer, then leaves the
    /// gradients untouched (callers zero them when starting the next step).
    /// Tensors without a gradient buffer are skipped.
    pub fn step(&mut self, params: &mut [&mut Tensor]) {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|t| Moments {
                    m: vec![0.0; t.len()],
                    v: vec![0.0; t.len()],
                })
                .collect();
        }
        assert_eq!(
            self.moments.len(),
            params.len(),
            "parameter group changed size between steps"
        );
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - (self.beta1 as f64).powf(t);
        let bc2 = 1.0 - (self.beta2 as f64).powf(t);

        for (tensor, mom) in params.iter_mut().zip(&mut self.moments) {
            assert_eq!(mom.m.len(), tensor.len(), "parameter shape changed");
            let Some(grad) = tensor.grad.as_ref() else {
                continue;
            };
            debug_assert_eq!(grad.len(), tensor.len());
            for i in 0..tensor.data.len() {
                let g = grad[i];
                mom.m[i] = self.beta1 * mom.m[i] + (1.0 - self.beta1) * g;
                mom.v[i] = self.beta2 * mom.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = mom.m[i] as f64 / bc1;
                let v_hat = mom.v[i] as f64 / bc2;
                tensor.data[i] -=
                    (self.lr as f64 * m_hat / (v_hat.sqrt() + self.eps as f64)) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut t = Tensor::from_vec(1, 3, vec![1.0, -2.0, 3.0]);
        t.grad_mut(); // zeros
        let before = t.data.clone();
        let mut opt = Adam::new(0.1);
        opt.step(&mut [&mut t]);
        assert_eq!(t.data, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // Bias correction makes the very first update -lr * g / (|g| + ~0).
        let mut t = Tensor::from_vec(1, 2, vec![0.0, 0.0]);
        t.grad_mut().copy_from_slice(&[3.0, -0.25]);
        let mut opt = Adam::new(0.01);
        opt.step(&mut [&mut t]);
        assert!((t.data[0] + 0.01).abs() < 1e-6, "{}", t.data[0]);
        assert!((t.data[1] - 0.01).abs() < 1e-6, "{}", t.data[1]);
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(x) = ||x - c||^2, gradient 2 (x - c).
        let c = [0.3f32, -1.2, 0.8];
        let mut x = Tensor::from_vec(1, 3, vec![0.0; 3]);
        let mut opt = Adam::new(0.05);
        for _ in 0..200 {
            let grad: Vec<f32> = x.data.iter().zip(&c).map(|(xi, ci)| 2.0 * (xi - ci)).collect();
            x.grad_mut().copy_from_slice(&grad);
            opt.step(&mut [&mut x]);
        }
        for (xi, ci) in x.data.iter().zip(&c) {
            assert!((xi - ci).abs() < 1e-3, "{xi} vs {ci}");
        }
    }
}
