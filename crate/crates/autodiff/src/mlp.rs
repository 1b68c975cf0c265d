use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::graph::{Graph, NodeId};
use crate::tensor::{matmul, Tensor};

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    None,
    Relu,
    /// Softplus with sharpness beta: ln(1 + exp(beta x)) / beta.
    Softplus(f32),
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// (in, out) weight matrix; inputs are row vectors.
    pub w: Tensor,
    /// (1, out) bias.
    pub b: Tensor,
    pub act: Activation,
}

/// Fully connected network over row-vector batches: `(B, in) -> (B, out)`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// He-initialized network. `widths` lists layer sizes from input to
    /// output; `act` applies to every layer except the last, which is linear.
    pub fn new<R: Rng>(widths: &[usize], act: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).unwrap();
            let w = Tensor::from_vec(
                fan_in,
                fan_out,
                (0..fan_in * fan_out)
                    .map(|_| normal.sample(rng) as f32)
                    .collect(),
            );
            let b = Tensor::zeros(1, fan_out);
            let is_last = l == widths.len() - 2;
            layers.push(Layer {
                w,
                b,
                act: if is_last { Activation::None } else { act },
            });
        }
        Self { layers }
    }

    /// Geometric initialization: the freshly constructed network approximates
    /// the signed distance to a sphere of the given radius centered at the
    /// origin (negative inside). Hidden activations are softplus(beta).
    pub fn geometric<R: Rng>(widths: &[usize], beta: f32, radius: f32, rng: &mut R) -> Self {
        assert!(widths.len() >= 2);
        assert_eq!(widths[widths.len() - 1], 1, "geometric init needs scalar output");
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let is_last = l == widths.len() - 2;
            let (w, b, act) = if is_last {
                let mean = (std::f64::consts::PI / fan_in as f64).sqrt();
                let normal = Normal::new(mean, 1e-5).unwrap();
                let w = Tensor::from_vec(
                    fan_in,
                    fan_out,
                    (0..fan_in).map(|_| normal.sample(rng) as f32).collect(),
                );
                let b = Tensor::from_vec(1, 1, vec![-radius]);
                (w, b, Activation::None)
            } else {
                let std = (2.0 / fan_out as f64).sqrt();
                let normal = Normal::new(0.0, std).unwrap();
                let w = Tensor::from_vec(
                    fan_in,
                    fan_out,
                    (0..fan_in * fan_out)
                        .map(|_| normal.sample(rng) as f32)
                        .collect(),
                );
                (w, Tensor::zeros(1, fan_out), Activation::Softplus(beta))
            };
            layers.push(Layer { w, b, act });
        }
        Self { layers }
    }

    /// Zeroes the final layer so the network output starts at exactly zero.
    pub fn zero_final_layer(&mut self) {
        let last = self.layers.last_mut().expect("empty MLP");
        last.w.data.iter_mut().for_each(|v| *v = 0.0);
        last.b.data.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.cols
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Checksum over all parameters (freeze guard).
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for l in &self.layers {
            for t in [&l.w, &l.b] {
                h ^= t.checksum();
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    /// Pure batched inference over frozen parameters: `(B, in) -> (B, out)`.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.cols, self.input_dim(), "input width mismatch");
        let mut cur = x.clone();
        for layer in &self.layers {
            let mut out = Tensor::zeros(cur.rows, layer.w.cols);
            matmul(
                &cur.data, cur.rows, cur.cols, &layer.w.data, layer.w.cols, &mut out.data,
            );
            for row in out.data.chunks_mut(layer.w.cols) {
                for (o, &b) in row.iter_mut().zip(&layer.b.data) {
                    *o += b;
                }
            }
            apply_activation(&mut out.data, layer.act);
            cur = out;
        }
        cur
    }

    /// Convenience single-sample inference.
    pub fn forward_one(&self, x: &[f32]) -> Vec<f32> {
        self.forward(&Tensor::from_vec(1, x.len(), x.to_vec())).data
    }

    /// Runs only the first `count` layers; `count = len - 1` yields the last
    /// hidden activations.
    pub fn forward_layers(&self, x: &Tensor, count: usize) -> Tensor {
        assert!(count <= self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers[..count] {
            let mut out = Tensor::zeros(cur.rows, layer.w.cols);
            matmul(
                &cur.data, cur.rows, cur.cols, &layer.w.data, layer.w.cols, &mut out.data,
            );
            for row in out.data.chunks_mut(layer.w.cols) {
                for (o, &b) in row.iter_mut().zip(&layer.b.data) {
                    *o += b;
                }
            }
            apply_activation(&mut out.data, layer.act);
            cur = out;
        }
        cur
    }

    /// Frozen-model forward that also returns the per-row gradient of the
    /// scalar output with respect to the input, shape `(B, in)`. Pure matrix
    /// arithmetic; requires a scalar output and a linear final layer.
    pub fn forward_with_input_grad(&self, x: &Tensor) -> (Tensor, Tensor) {
        assert_eq!(self.output_dim(), 1, "input gradient needs scalar output");
        assert_eq!(self.layers.last().unwrap().act, Activation::None);
        let batch = x.rows;

        let mut cur = x.clone();
        let mut preacts: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut out = Tensor::zeros(cur.rows, layer.w.cols);
            matmul(
                &cur.data, cur.rows, cur.cols, &layer.w.data, layer.w.cols, &mut out.data,
            );
            for row in out.data.chunks_mut(layer.w.cols) {
                for (o, &b) in row.iter_mut().zip(&layer.b.data) {
                    *o += b;
                }
            }
            preacts.push(out.clone());
            apply_activation(&mut out.data, layer.act);
            cur = out;
        }

        // Backward chain over the activations, batched: start from the last
        // weight column and walk toward the input.
        let last = self.layers.len() - 1;
        let wl = &self.layers[last].w; // (d, 1)
        let mut grad = Tensor::zeros(batch, wl.rows);
        for row in grad.data.chunks_mut(wl.rows) {
            for (o, &w) in row.iter_mut().zip(&wl.data) {
                *o = w;
            }
        }
        for l in (0..last).rev() {
            let z = &preacts[l];
            match self.layers[l].act {
                Activation::None => {}
                Activation::Relu => {
                    for (gv, &zv) in grad.data.iter_mut().zip(&z.data) {
                        if zv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                }
                Activation::Softplus(beta) => {
                    for (gv, &zv) in grad.data.iter_mut().zip(&z.data) {
                        let s = if beta * zv >= 0.0 {
                            1.0 / (1.0 + (-beta * zv).exp())
                        } else {
                            let e = (beta * zv).exp();
                            e / (1.0 + e)
                        };
                        *gv *= s;
                    }
                }
            }
            let w = &self.layers[l].w; // (in, out); need grad @ W^T
            let mut wt = vec![0.0f32; w.rows * w.cols];
            for i in 0..w.rows {
                for j in 0..w.cols {
                    wt[j * w.rows + i] = w.data[i * w.cols + j];
                }
            }
            let mut next = Tensor::zeros(batch, w.rows);
            matmul(&grad.data, batch, w.cols, &wt, w.rows, &mut next.data);
            grad = next;
        }
        (cur, grad)
    }

    /// Registers parameter leaves on the graph.
    pub fn bind(&self, g: &mut Graph) -> MlpBinding {
        let layers = self
            .layers
            .iter()
            .map(|l| (g.leaf_tensor(&l.w), g.leaf_tensor(&l.b)))
            .collect();
        MlpBinding { layers }
    }

    /// Differentiable forward pass. Returns the output node and the
    /// pre-activation node of every layer (the input-gradient graph needs
    /// them). One binding may serve several forward passes.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        binding: &MlpBinding,
        input: NodeId,
    ) -> (NodeId, Vec<NodeId>) {
        let mut cur = input;
        let mut preacts = Vec::with_capacity(self.layers.len());
        for (layer, &(w, b)) in self.layers.iter().zip(&binding.layers) {
            let z = g.matmul(cur, w).expect("layer width mismatch");
            let z = g.add_row(z, b).expect("bias width mismatch");
            preacts.push(z);
            cur = match layer.act {
                Activation::None => z,
                Activation::Relu => g.relu(z),
                Activation::Softplus(beta) => g.softplus(z, beta),
            };
        }
        (cur, preacts)
    }

    /// Builds the gradient of a scalar-output network with respect to its
    /// input as an explicit graph value of shape (B, in). Because the result
    /// is an ordinary graph node, a single reverse sweep through any loss
    /// built on it yields parameter gradients; no double backward pass is
    /// ever taken.
    ///
    /// Requires `forward_graph` to have run on the same binding, a scalar
    /// output, and a linear final layer.
    pub fn input_gradient_graph(
        &self,
        g: &mut Graph,
        binding: &MlpBinding,
        preacts: &[NodeId],
        batch: usize,
    ) -> NodeId {
        assert_eq!(self.output_dim(), 1, "input gradient needs scalar output");
        assert_eq!(
            self.layers.last().unwrap().act,
            Activation::None,
            "final layer must be linear"
        );
        assert_eq!(preacts.len(), self.layers.len());

        let (w_last, _) = binding.layers[self.layers.len() - 1];
        let wt = g.transpose(w_last); // (1, d)
        let mut grad = g.broadcast_row(wt, batch).expect("broadcast");
        for l in (0..self.layers.len() - 1).rev() {
            let dact = match self.layers[l].act {
                Activation::None => None,
                Activation::Relu => Some(g.step(preacts[l])),
                Activation::Softplus(beta) => Some(g.sigmoid(preacts[l], beta)),
            };
            if let Some(d) = dact {
                grad = g.mul(grad, d).expect("activation shape");
            }
            let (w, _) = binding.layers[l];
            let wt = g.transpose(w);
            grad = g.matmul(grad, wt).expect("chain shape");
        }
        grad
    }

    /// Adds the graph gradients of the bound parameters into the tensors'
    /// gradient buffers.
    pub fn accumulate_grads(&mut self, g: &Graph, binding: &MlpBinding) {
        for (layer, &(wn, bn)) in self.layers.iter_mut().zip(&binding.layers) {
            for (t, node) in [(&mut layer.w, wn), (&mut layer.b, bn)] {
                let grad = g.grad(node);
                for (dst, &src) in t.grad_mut().iter_mut().zip(grad) {
                    *dst += src;
                }
            }
        }
    }
}

fn apply_activation(data: &mut [f32], act: Activation) {
    match act {
        Activation::None => {}
        Activation::Relu => data.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Softplus(beta) => data.iter_mut().for_each(|v| {
            *v = v.max(0.0) + (-beta * v.abs()).exp().ln_1p() / beta;
        }),
    }
}

/// Graph-side handle of a bound [`Mlp`]: one (weight, bias) leaf pair per
/// layer.
#[derive(Debug, Clone)]
pub struct MlpBinding {
    pub layers: Vec<(NodeId, NodeId)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_layer_forward_matches_hand_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::new(&[2, 3, 1], Activation::Relu, &mut rng);
        let x = [0.7f32, -0.3];

        // Straight-line oracle: unrolled matrix arithmetic.
        let l0 = &mlp.layers[0];
        let mut h = [0.0f32; 3];
        for j in 0..3 {
            let mut acc = l0.b.data[j];
            for i in 0..2 {
                acc += x[i] * l0.w.get(i, j);
            }
            h[j] = acc.max(0.0);
        }
        let l1 = &mlp.layers[1];
        let mut expected = l1.b.data[0];
        for j in 0..3 {
            expected += h[j] * l1.w.get(j, 0);
        }

        let got = mlp.forward_one(&x)[0];
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }

    #[test]
    fn graph_forward_matches_pure_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::new(&[4, 8, 8, 1], Activation::Softplus(3.0), &mut rng);
        let x = Tensor::from_vec(2, 4, vec![0.1, -0.2, 0.3, 0.9, -1.0, 0.0, 0.4, 0.2]);
        let pure = mlp.forward(&x);

        let mut g = Graph::new();
        let binding = mlp.bind(&mut g);
        let input = g.leaf_tensor(&x);
        let (out, _) = mlp.forward_graph(&mut g, &binding, input);
        assert_eq!(g.value(out), pure.data.as_slice());
    }

    #[test]
    fn input_gradient_graph_matches_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&[3, 16, 16, 1], Activation::Softplus(10.0), &mut rng);
        let x = [0.25f32, -0.5, 0.75];

        // Route 1: ordinary reverse-mode gradient at the input leaf.
        let mut g = Graph::new();
        let binding = mlp.bind(&mut g);
        let input = g.leaf(1, 3, &x);
        let (out, _) = mlp.forward_graph(&mut g, &binding, input);
        let scalar = g.sum(out);
        g.backward(scalar).unwrap();
        let via_backward: Vec<f32> = g.grad(input).to_vec();

        // Route 2: the explicit input-gradient graph.
        let mut g2 = Graph::new();
        let b2 = mlp.bind(&mut g2);
        let input2 = g2.leaf(1, 3, &x);
        let (_, preacts) = mlp.forward_graph(&mut g2, &b2, input2);
        let grad_node = mlp.input_gradient_graph(&mut g2, &b2, &preacts, 1);
        let via_graph = g2.value(grad_node);

        for (a, b) in via_backward.iter().zip(via_graph) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn pure_input_grad_matches_graph_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = Mlp::new(&[5, 12, 12, 1], Activation::Softplus(7.0), &mut rng);
        let x = Tensor::from_vec(3, 5, (0..15).map(|i| ((i * 7) as f32 * 0.11).cos()).collect());

        let (vals, grads) = mlp.forward_with_input_grad(&x);
        assert_eq!(vals.data, mlp.forward(&x).data);

        let mut g = Graph::new();
        let binding = mlp.bind(&mut g);
        let input = g.leaf_tensor(&x);
        let (_, preacts) = mlp.forward_graph(&mut g, &binding, input);
        let gn = mlp.input_gradient_graph(&mut g, &binding, &preacts, 3);
        for (a, b) in grads.data.iter().zip(g.value(gn)) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_final_layer_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mlp = Mlp::new(&[5, 8, 3], Activation::Relu, &mut rng);
        mlp.zero_final_layer();
        let out = mlp.forward_one(&[1.0, -2.0, 0.5, 0.3, 0.9]);
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn same_seed_same_network() {
        let a = Mlp::new(&[3, 4, 1], Activation::Relu, &mut ChaCha8Rng::seed_from_u64(9));
        let b = Mlp::new(&[3, 4, 1], Activation::Relu, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.checksum(), b.checksum());
    }
}
