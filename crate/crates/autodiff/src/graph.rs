use std::sync::Arc;

use crate::tensor::{matmul, Tensor};
use crate::{AutodiffError, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f32),
    AddScalar(NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// (B,n) + (1,n), bias broadcast over rows.
    AddRow(NodeId, NodeId),
    /// (1,n) replicated to (B,n).
    BroadcastRow(NodeId),
    Relu(NodeId),
    /// a.e. derivative of relu; its own derivative is taken as zero.
    Step,
    Softplus(NodeId, f32),
    Sigmoid(NodeId, f32),
    Square(NodeId),
    Abs(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// Per-row L2 norm: (B,n) -> (B,1).
    RowNorm(NodeId),
    ConcatCols(NodeId, NodeId),
    /// Column window [start, start+len) of every row.
    SliceCols {
        src: NodeId,
        start: usize,
        len: usize,
    },
    /// rows[b] = sum_j weights[b][j] * src[indices[b][j]]; indices and
    /// weights are constants of the graph.
    WeightedGather {
        src: NodeId,
        indices: Arc<Vec<[u32; 3]>>,
        weights: Arc<Vec<[f32; 3]>>,
    },
    /// Constant per-row affine map: y_b = M_b x_b + t_b for (B,3) input.
    /// Only the linear part matters for backward.
    RowAffine {
        src: NodeId,
        mats: Arc<Vec<[f32; 9]>>,
    },
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f32>,
    /// f64 shadow of `value`; populated only in precise mode.
    value64: Vec<f64>,
}

/// Eager define-by-run computation graph. Values are computed at op
/// creation; `backward` runs one reverse sweep and exposes per-leaf
/// gradients. Node order is construction order, which makes two passes over
/// the same graph bit-identical.
///
/// Precise mode ([`Graph::new_precise`]) additionally chains every value
/// through f64 shadows, which finite-difference checks use so that the
/// difference quotients are not drowned by f32 rounding. Training uses the
/// plain f32 mode.
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Vec<f32>>,
    precise: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            precise: false,
        }
    }

    pub fn new_precise() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            precise: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        (self.nodes[id].rows, self.nodes[id].cols)
    }

    pub fn value(&self, id: NodeId) -> &[f32] {
        &self.nodes[id].value
    }

    pub fn value_scalar(&self, id: NodeId) -> f32 {
        debug_assert_eq!(self.nodes[id].value.len(), 1);
        self.nodes[id].value[0]
    }

    /// Full-precision scalar read (falls back to the f32 value outside
    /// precise mode).
    pub fn value_scalar_f64(&self, id: NodeId) -> f64 {
        if self.precise {
            self.nodes[id].value64[0]
        } else {
            self.nodes[id].value[0] as f64
        }
    }

    /// Gradient of the last `backward` output with respect to node `id`.
    pub fn grad(&self, id: NodeId) -> &[f32] {
        &self.grads[id]
    }

    fn w(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value64
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f32>, value64: Vec<f64>) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        debug_assert!(!self.precise || value64.len() == value.len());
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            value64,
        });
        self.nodes.len() - 1
    }

    // ---- leaves -----------------------------------------------------------

    pub fn leaf(&mut self, rows: usize, cols: usize, data: &[f32]) -> NodeId {
        let v64 = if self.precise {
            data.iter().map(|&v| v as f64).collect()
        } else {
            Vec::new()
        };
        self.push(Op::Leaf, rows, cols, data.to_vec(), v64)
    }

    pub fn leaf_tensor(&mut self, t: &Tensor) -> NodeId {
        self.leaf(t.rows, t.cols, &t.data)
    }

    pub fn scalar(&mut self, v: f32) -> NodeId {
        self.leaf(1, 1, &[v])
    }

    // ---- elementwise ------------------------------------------------------

    fn binary_same_shape(&self, a: NodeId, b: NodeId) -> Result<(usize, usize)> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if (ra, ca) != (rb, cb) {
            return Err(AutodiffError::ShapeMismatch(ra, ca, rb, cb));
        }
        Ok((ra, ca))
    }

    fn map1(
        &mut self,
        a: NodeId,
        op: Op,
        f32fn: impl Fn(f32) -> f32,
        f64fn: impl Fn(f64) -> f64,
    ) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a].value.iter().map(|&x| f32fn(x)).collect();
        let v64 = if self.precise {
            self.w(a).iter().map(|&x| f64fn(x)).collect()
        } else {
            Vec::new()
        };
        self.push(op, r, c, v, v64)
    }

    fn map2(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: Op,
        f32fn: impl Fn(f32, f32) -> f32,
        f64fn: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        let (r, c) = self.binary_same_shape(a, b)?;
        let v = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(&x, &y)| f32fn(x, y))
            .collect();
        let v64 = if self.precise {
            self.w(a)
                .iter()
                .zip(self.w(b))
                .map(|(&x, &y)| f64fn(x, y))
                .collect()
        } else {
            Vec::new()
        };
        Ok(self.push(op, r, c, v, v64))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.map2(a, b, Op::Add(a, b), |x, y| x + y, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.map2(a, b, Op::Sub(a, b), |x, y| x - y, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.map2(a, b, Op::Mul(a, b), |x, y| x * y, |x, y| x * y)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.map1(a, Op::Neg(a), |x| -x, |x| -x)
    }

    pub fn scale(&mut self, a: NodeId, s: f32) -> NodeId {
        self.map1(a, Op::Scale(a, s), move |x| x * s, move |x| x * s as f64)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f32) -> NodeId {
        self.map1(a, Op::AddScalar(a), move |x| x + s, move |x| x + s as f64)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map1(a, Op::Relu(a), |x| x.max(0.0), |x| x.max(0.0))
    }

    pub fn step(&mut self, a: NodeId) -> NodeId {
        self.map1(
            a,
            Op::Step,
            |x| if x > 0.0 { 1.0 } else { 0.0 },
            |x| if x > 0.0 { 1.0 } else { 0.0 },
        )
    }

    pub fn softplus(&mut self, a: NodeId, beta: f32) -> NodeId {
        let b32 = beta;
        let b64 = beta as f64;
        self.map1(
            a,
            Op::Softplus(a, beta),
            move |x| x.max(0.0) + (-b32 * x.abs()).exp().ln_1p() / b32,
            move |x| x.max(0.0) + (-b64 * x.abs()).exp().ln_1p() / b64,
        )
    }

    pub fn sigmoid(&mut self, a: NodeId, beta: f32) -> NodeId {
        let b32 = beta;
        let b64 = beta as f64;
        self.map1(
            a,
            Op::Sigmoid(a, beta),
            move |x| sigmoid32(b32 * x),
            move |x| sigmoid64(b64 * x),
        )
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.map1(a, Op::Square(a), |x| x * x, |x| x * x)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.map1(a, Op::Abs(a), |x| x.abs(), |x| x.abs())
    }

    // ---- structure --------------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ka) = self.shape(a);
        let (kb, n) = self.shape(b);
        if ka != kb {
            return Err(AutodiffError::ShapeMismatch(m, ka, kb, n));
        }
        let mut out = vec![0.0; m * n];
        matmul(&self.nodes[a].value, m, ka, &self.nodes[b].value, n, &mut out);
        let v64 = if self.precise {
            let av = self.w(a);
            let bv = self.w(b);
            let mut o = vec![0.0f64; m * n];
            for i in 0..m {
                for kk in 0..ka {
                    let aik = av[i * ka + kk];
                    if aik == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        o[i * n + j] += aik * bv[kk * n + j];
                    }
                }
            }
            o
        } else {
            Vec::new()
        };
        Ok(self.push(Op::MatMul(a, b), m, n, out, v64))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = transpose_buf(&self.nodes[a].value, r, c);
        let v64 = if self.precise {
            transpose_buf64(self.w(a), r, c)
        } else {
            Vec::new()
        };
        self.push(Op::Transpose(a), c, r, out, v64)
    }

    pub fn add_row(&mut self, m: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(m);
        let (rb, cb) = self.shape(bias);
        if rb != 1 || cb != c {
            return Err(AutodiffError::ShapeMismatch(r, c, rb, cb));
        }
        let bv = self.nodes[bias].value.clone();
        let mut v = Vec::with_capacity(r * c);
        for row in self.nodes[m].value.chunks(c) {
            v.extend(row.iter().zip(&bv).map(|(x, b)| x + b));
        }
        let v64 = if self.precise {
            let bv = self.w(bias).to_vec();
            let mut o = Vec::with_capacity(r * c);
            for row in self.w(m).chunks(c) {
                o.extend(row.iter().zip(&bv).map(|(x, b)| x + b));
            }
            o
        } else {
            Vec::new()
        };
        Ok(self.push(Op::AddRow(m, bias), r, c, v, v64))
    }

    pub fn broadcast_row(&mut self, v: NodeId, rows: usize) -> Result<NodeId> {
        let (r, c) = self.shape(v);
        if r != 1 {
            return Err(AutodiffError::ShapeMismatch(r, c, 1, c));
        }
        let row = self.nodes[v].value.clone();
        let mut out = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            out.extend_from_slice(&row);
        }
        let v64 = if self.precise {
            let row = self.w(v).to_vec();
            let mut o = Vec::with_capacity(rows * c);
            for _ in 0..rows {
                o.extend_from_slice(&row);
            }
            o
        } else {
            Vec::new()
        };
        Ok(self.push(Op::BroadcastRow(v), rows, c, out, v64))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.nodes[a].value.iter().map(|&x| x as f64).sum();
        let v64 = if self.precise {
            vec![self.w(a).iter().sum::<f64>()]
        } else {
            Vec::new()
        };
        self.push(Op::Sum(a), 1, 1, vec![total as f32], v64)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a].value.len().max(1);
        let total: f64 = self.nodes[a].value.iter().map(|&x| x as f64).sum();
        let v64 = if self.precise {
            vec![self.w(a).iter().sum::<f64>() / n as f64]
        } else {
            Vec::new()
        };
        self.push(Op::Mean(a), 1, 1, vec![(total / n as f64) as f32], v64)
    }

    pub fn row_norm(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a]
            .value
            .chunks(c)
            .map(|row| {
                let s: f64 = row.iter().map(|&x| (x as f64) * (x as f64)).sum();
                s.sqrt() as f32
            })
            .collect();
        let v64 = if self.precise {
            self.w(a)
                .chunks(c)
                .map(|row| row.iter().map(|&x| x * x).sum::<f64>().sqrt())
                .collect()
        } else {
            Vec::new()
        };
        self.push(Op::RowNorm(a), r, 1, v, v64)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(AutodiffError::ShapeMismatch(ra, ca, rb, cb));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&self.nodes[a].value[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&self.nodes[b].value[i * cb..(i + 1) * cb]);
        }
        let v64 = if self.precise {
            let mut o = Vec::with_capacity(ra * (ca + cb));
            for i in 0..ra {
                o.extend_from_slice(&self.w(a)[i * ca..(i + 1) * ca]);
                o.extend_from_slice(&self.w(b)[i * cb..(i + 1) * cb]);
            }
            o
        } else {
            Vec::new()
        };
        Ok(self.push(Op::ConcatCols(a, b), ra, ca + cb, out, v64))
    }

    pub fn slice_cols(&mut self, src: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(src);
        if start + len > c {
            return Err(AutodiffError::ShapeMismatch(r, c, start, len));
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&self.nodes[src].value[i * c + start..i * c + start + len]);
        }
        let v64 = if self.precise {
            let mut o = Vec::with_capacity(r * len);
            for i in 0..r {
                o.extend_from_slice(&self.w(src)[i * c + start..i * c + start + len]);
            }
            o
        } else {
            Vec::new()
        };
        Ok(self.push(Op::SliceCols { src, start, len }, r, len, out, v64))
    }

    /// Three-point weighted gather over the rows of `src`; the backbone of
    /// surface-feature interpolation. Indices/weights are graph constants.
    pub fn weighted_gather(
        &mut self,
        src: NodeId,
        indices: Arc<Vec<[u32; 3]>>,
        weights: Arc<Vec<[f32; 3]>>,
    ) -> Result<NodeId> {
        let (r, c) = self.shape(src);
        assert_eq!(indices.len(), weights.len());
        let b = indices.len();
        let mut out = vec![0.0f32; b * c];
        for (row, (idx, w)) in indices.iter().zip(weights.iter()).enumerate() {
            for j in 0..3 {
                let i = idx[j] as usize;
                debug_assert!(i < r);
                let srow = &self.nodes[src].value[i * c..(i + 1) * c];
                let orow = &mut out[row * c..(row + 1) * c];
                for (o, &s) in orow.iter_mut().zip(srow) {
                    *o += w[j] * s;
                }
            }
        }
        let v64 = if self.precise {
            let sv = self.w(src);
            let mut o = vec![0.0f64; b * c];
            for (row, (idx, w)) in indices.iter().zip(weights.iter()).enumerate() {
                for j in 0..3 {
                    let i = idx[j] as usize;
                    for cc in 0..c {
                        o[row * c + cc] += w[j] as f64 * sv[i * c + cc];
                    }
                }
            }
            o
        } else {
            Vec::new()
        };
        Ok(self.push(
            Op::WeightedGather {
                src,
                indices,
                weights,
            },
            b,
            c,
            out,
            v64,
        ))
    }

    /// Constant per-row affine map on a (B,3) node.
    pub fn row_affine(
        &mut self,
        src: NodeId,
        mats: Arc<Vec<[f32; 9]>>,
        trans: Arc<Vec<[f32; 3]>>,
    ) -> Result<NodeId> {
        let (r, c) = self.shape(src);
        if c != 3 || mats.len() != r || trans.len() != r {
            return Err(AutodiffError::ShapeMismatch(r, c, mats.len(), 3));
        }
        let mut out = vec![0.0f32; r * 3];
        for (b, (m, t)) in mats.iter().zip(trans.iter()).enumerate() {
            let x = &self.nodes[src].value[b * 3..b * 3 + 3];
            for i in 0..3 {
                out[b * 3 + i] = m[i * 3] * x[0] + m[i * 3 + 1] * x[1] + m[i * 3 + 2] * x[2] + t[i];
            }
        }
        let v64 = if self.precise {
            let sv = self.w(src);
            let mut o = vec![0.0f64; r * 3];
            for (b, (m, t)) in mats.iter().zip(trans.iter()).enumerate() {
                let x = &sv[b * 3..b * 3 + 3];
                for i in 0..3 {
                    o[b * 3 + i] = m[i * 3] as f64 * x[0]
                        + m[i * 3 + 1] as f64 * x[1]
                        + m[i * 3 + 2] as f64 * x[2]
                        + t[i] as f64;
                }
            }
            o
        } else {
            Vec::new()
        };
        Ok(self.push(Op::RowAffine { src, mats }, r, 3, out, v64))
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar output; fills per-node gradients.
    pub fn backward(&mut self, out: NodeId) -> Result<()> {
        let (r, c) = self.shape(out);
        if r != 1 || c != 1 {
            return Err(AutodiffError::NonScalarOutput(r, c));
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| vec![0.0f32; n.value.len()])
            .collect();
        self.grads[out][0] = 1.0;

        for id in (0..self.nodes.len()).rev() {
            if self.grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut self.grads[id]);
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(a, &g);
                    self.accumulate(b, &g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(a, &g);
                    let neg: Vec<f32> = g.iter().map(|x| -x).collect();
                    self.accumulate(b, &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f32> = g
                        .iter()
                        .zip(&self.nodes[b].value)
                        .map(|(x, y)| x * y)
                        .collect();
                    let gb: Vec<f32> = g
                        .iter()
                        .zip(&self.nodes[a].value)
                        .map(|(x, y)| x * y)
                        .collect();
                    self.accumulate(a, &ga);
                    self.accumulate(b, &gb);
                }
                Op::Neg(a) => {
                    let ga: Vec<f32> = g.iter().map(|x| -x).collect();
                    self.accumulate(a, &ga);
                }
                Op::Scale(a, s) => {
                    let ga: Vec<f32> = g.iter().map(|x| x * s).collect();
                    self.accumulate(a, &ga);
                }
                Op::AddScalar(a) => self.accumulate(a, &g),
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(a);
                    let (_, n) = self.shape(b);
                    // gA = g @ B^T
                    let bt = transpose_buf(&self.nodes[b].value, k, n);
                    let mut ga = vec![0.0; m * k];
                    matmul(&g, m, n, &bt, k, &mut ga);
                    // gB = A^T @ g
                    let at = transpose_buf(&self.nodes[a].value, m, k);
                    let mut gb = vec![0.0; k * n];
                    matmul(&at, k, m, &g, n, &mut gb);
                    self.accumulate(a, &ga);
                    self.accumulate(b, &gb);
                }
                Op::Transpose(a) => {
                    let (r, c) = self.shape(id);
                    let gt = transpose_buf(&g, r, c);
                    self.accumulate(a, &gt);
                }
                Op::AddRow(m, bias) => {
                    self.accumulate(m, &g);
                    let (_, c) = self.shape(bias);
                    let mut gb = vec![0.0f64; c];
                    for row in g.chunks(c) {
                        for (acc, &x) in gb.iter_mut().zip(row) {
                            *acc += x as f64;
                        }
                    }
                    let gb: Vec<f32> = gb.into_iter().map(|x| x as f32).collect();
                    self.accumulate(bias, &gb);
                }
                Op::BroadcastRow(v) => {
                    let (_, c) = self.shape(v);
                    let mut gv = vec![0.0f64; c];
                    for row in g.chunks(c) {
                        for (acc, &x) in gv.iter_mut().zip(row) {
                            *acc += x as f64;
                        }
                    }
                    let gv: Vec<f32> = gv.into_iter().map(|x| x as f32).collect();
                    self.accumulate(v, &gv);
                }
                Op::Relu(a) => {
                    let ga: Vec<f32> = g
                        .iter()
                        .zip(&self.nodes[a].value)
                        .map(|(x, &v)| if v > 0.0 { *x } else { 0.0 })
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::Step => {
                    // Derivative is zero almost everywhere.
                }
                Op::Softplus(a, beta) => {
                    let ga: Vec<f32> = g
                        .iter()
                        .zip(&self.nodes[a].value)
                        .map(|(x, &v)| x * sigmoid32(beta * v))
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::Sigmoid(a, beta) => {
                    let ga: Vec<f32> = g
                        .iter()
                        .zip(&self.nodes[id].value)
                        .map(|(x, &s)| x * beta * s * (1.0 - s))
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::Square(a) => {
                    let ga: Vec<f32> = g
                        .iter()
                        .zip(&self.nodes[a].value)
                        .map(|(x, &v)| 2.0 * v * x)
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::Abs(a) => {
                    let ga: Vec<f32> = g
                        .iter()
                        .zip(&self.nodes[a].value)
                        .map(|(x, &v)| {
                            if v > 0.0 {
                                *x
                            } else if v < 0.0 {
                                -*x
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.accumulate(a, &ga);
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; self.nodes[a].value.len()];
                    self.accumulate(a, &ga);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a].value.len().max(1);
                    let ga = vec![g[0] / n as f32; self.nodes[a].value.len()];
                    self.accumulate(a, &ga);
                }
                Op::RowNorm(a) => {
                    let (_, c) = self.shape(a);
                    let mut ga = vec![0.0f32; self.nodes[a].value.len()];
                    for (b, &gy) in g.iter().enumerate() {
                        let y = self.nodes[id].value[b];
                        if y > 1e-12 {
                            let row = &self.nodes[a].value[b * c..(b + 1) * c];
                            let grow = &mut ga[b * c..(b + 1) * c];
                            for (o, &x) in grow.iter_mut().zip(row) {
                                *o = gy * x / y;
                            }
                        }
                    }
                    self.accumulate(a, &ga);
                }
                Op::ConcatCols(a, b) => {
                    let (ra, ca) = self.shape(a);
                    let (_, cb) = self.shape(b);
                    let mut ga = vec![0.0f32; ra * ca];
                    let mut gb = vec![0.0f32; ra * cb];
                    for i in 0..ra {
                        let row = &g[i * (ca + cb)..(i + 1) * (ca + cb)];
                        ga[i * ca..(i + 1) * ca].copy_from_slice(&row[..ca]);
                        gb[i * cb..(i + 1) * cb].copy_from_slice(&row[ca..]);
                    }
                    self.accumulate(a, &ga);
                    self.accumulate(b, &gb);
                }
                Op::SliceCols { src, start, len } => {
                    let (r, c) = self.shape(src);
                    let mut gs = vec![0.0f32; r * c];
                    for i in 0..r {
                        gs[i * c + start..i * c + start + len]
                            .copy_from_slice(&g[i * len..(i + 1) * len]);
                    }
                    self.accumulate(src, &gs);
                }
                Op::WeightedGather {
                    src,
                    indices,
                    weights,
                } => {
                    let (r, c) = self.shape(src);
                    let mut gs = vec![0.0f32; r * c];
                    for (row, (idx, w)) in indices.iter().zip(weights.iter()).enumerate() {
                        let grow = &g[row * c..(row + 1) * c];
                        for j in 0..3 {
                            let i = idx[j] as usize;
                            let dst = &mut gs[i * c..(i + 1) * c];
                            for (d, &x) in dst.iter_mut().zip(grow) {
                                *d += w[j] * x;
                            }
                        }
                    }
                    self.accumulate(src, &gs);
                }
                Op::RowAffine { src, mats, .. } => {
                    let (r, _) = self.shape(src);
                    let mut gs = vec![0.0f32; r * 3];
                    for (b, m) in mats.iter().enumerate() {
                        let gy = &g[b * 3..b * 3 + 3];
                        // gx = M^T gy
                        for i in 0..3 {
                            gs[b * 3 + i] = m[i] * gy[0] + m[3 + i] * gy[1] + m[6 + i] * gy[2];
                        }
                    }
                    self.accumulate(src, &gs);
                }
            }
            self.grads[id] = g;
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, add: &[f32]) {
        let dst = &mut self.grads[id];
        debug_assert_eq!(dst.len(), add.len());
        for (d, &a) in dst.iter_mut().zip(add) {
            *d += a;
        }
    }
}

fn transpose_buf(src: &[f32], r: usize, c: usize) -> Vec<f32> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    out
}

fn transpose_buf64(src: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = src[i * c + j];
        }
    }
    out
}

fn sigmoid32(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sigmoid64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
