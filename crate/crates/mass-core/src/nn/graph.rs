//! Reverse-mode autodiff over a define-by-run tape.
//!
//! Every operation appends a node holding its value, shape, and parents;
//! node indices are therefore already in topological order and the
//! backward pass is a single reverse sweep (cycles cannot be constructed).
//! Tensors are 2-D `[rows, cols]`, row-major; scalars are `[1, 1]`.
//!
//! Shape mismatches and non-finite values panic at the offending op with
//! its name; the training loop separately surfaces a non-finite loss as a
//! typed error before stepping.

use crate::error::{MassError, Result};
use crate::scalar::Scalar;

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op<S: Scalar> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Scale(NodeId, S),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Gelu(NodeId),
    Sqrt(NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    LayerNormRows { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Vec<S>, inv_std: Vec<S> },
    SumAll(NodeId),
    MeanAll(NodeId),
    SumRows(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows { x: NodeId, start: usize },
    SliceCols { x: NodeId, start: usize },
    ReverseRows(NodeId),
    GatherCols { x: NodeId, idx: Vec<usize> },
    Dropout { x: NodeId, mask: Vec<bool>, keep_inv: S },
}

#[derive(Debug, Clone)]
struct Node<S: Scalar> {
    rows: usize,
    cols: usize,
    value: Vec<S>,
    needs_grad: bool,
    op: Op<S>,
}

/// Gradient table produced by [`Graph::backward`], indexed by node id.
#[derive(Debug)]
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: NodeId) -> Option<&[S]> {
        self.grads.get(id).and_then(|g| g.as_deref())
    }
}

/// Define-by-run computation tape.
#[derive(Debug, Default)]
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id];
        (n.rows, n.cols)
    }

    pub fn value(&self, id: NodeId) -> &[S] {
        &self.nodes[id].value
    }

    /// Value of a `[1, 1]` node.
    pub fn scalar_value(&self, id: NodeId) -> S {
        let n = &self.nodes[id];
        assert_eq!((n.rows, n.cols), (1, 1), "scalar_value on shape [{}, {}]", n.rows, n.cols);
        n.value[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<S>, needs_grad: bool, op: Op<S>) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        for &v in &value {
            assert!(v.is_finite(), "non-finite value out of {}", op_name(&op));
        }
        self.nodes.push(Node { rows, cols, value, needs_grad, op });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].needs_grad
    }

    // ---- leaves ----

    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<S>, requires_grad: bool) -> NodeId {
        assert_eq!(data.len(), rows * cols, "leaf data length mismatch");
        self.push(rows, cols, data, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<S>) -> NodeId {
        self.leaf(rows, cols, data, false)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.constant(rows, cols, vec![S::zero(); rows * cols])
    }

    pub fn ones(&mut self, rows: usize, cols: usize) -> NodeId {
        self.constant(rows, cols, vec![S::one(); rows * cols])
    }

    // ---- elementwise binary with row/col broadcast on the second arg ----

    fn broadcast_shape(&self, a: NodeId, b: NodeId, what: &str) -> (usize, usize) {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let ok = (ar == br && ac == bc) || (br == 1 && ac == bc) || (bc == 1 && ar == br);
        assert!(ok, "{what}: shapes [{ar}, {ac}] and [{br}, {bc}] do not align");
        (ar, ac)
    }

    fn ew_binary(&mut self, a: NodeId, b: NodeId, op: fn(S, S) -> S, tag: Op<S>, what: &str) -> NodeId {
        let (rows, cols) = self.broadcast_shape(a, b, what);
        let (br, bc) = self.shape(b);
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let av = self.nodes[a].value[i * cols + j];
                let bi = if br == 1 { j } else if bc == 1 { i } else { i * cols + j };
                out.push(op(av, self.nodes[b].value[bi]));
            }
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(rows, cols, out, ng, tag)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ew_binary(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ew_binary(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ew_binary(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.ew_binary(a, b, |x, y| x / y, Op::Div(a, b), "div")
    }

    // ---- elementwise unary ----

    fn ew_unary(&mut self, x: NodeId, f: impl Fn(S) -> S, tag: Op<S>) -> NodeId {
        let (rows, cols) = self.shape(x);
        let out: Vec<S> = self.nodes[x].value.iter().map(|&v| f(v)).collect();
        let ng = self.needs(x);
        self.push(rows, cols, out, ng, tag)
    }

    pub fn scale(&mut self, x: NodeId, c: S) -> NodeId {
        self.ew_unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.ew_unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.ew_unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        self.ew_unary(x, gelu, Op::Gelu(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.ew_unary(x, |v| v.sqrt(), Op::Sqrt(x))
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul: [{n}, {k}] x [{k2}, {m}]");
        let out = matmul_raw(&self.nodes[a].value, &self.nodes[b].value, n, k, m);
        let ng = self.needs(a) || self.needs(b);
        self.push(n, m, out, ng, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = self.shape(x);
        let v = &self.nodes[x].value;
        let mut out = vec![S::zero(); rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = v[i * cols + j];
            }
        }
        let ng = self.needs(x);
        self.push(cols, rows, out, ng, Op::Transpose(x))
    }

    // ---- normalizations ----

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = self.shape(x);
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = &self.nodes[x].value[i * cols..(i + 1) * cols];
            out.extend(softmax_row(row));
        }
        let ng = self.needs(x);
        self.push(rows, cols, out, ng, Op::SoftmaxRows(x))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = self.shape(x);
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = &self.nodes[x].value[i * cols..(i + 1) * cols];
            let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
            let lse = row.iter().map(|&v| (v - max).exp()).fold(S::zero(), |a, b| a + b).ln();
            out.extend(row.iter().map(|&v| v - max - lse));
        }
        let ng = self.needs(x);
        self.push(rows, cols, out, ng, Op::LogSoftmaxRows(x))
    }

    /// Row-wise layer norm with scale `gamma` and shift `beta` (`[1, cols]`
    /// each). Population variance, epsilon 1e-8 inside the square root.
    pub fn layer_norm_rows(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let (rows, cols) = self.shape(x);
        assert_eq!(self.shape(gamma), (1, cols), "layer_norm gamma shape");
        assert_eq!(self.shape(beta), (1, cols), "layer_norm beta shape");
        let eps = S::from_f64_c(1e-8);
        let inv_cols = S::one() / S::from_usize_c(cols);
        let mut xhat = Vec::with_capacity(rows * cols);
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let row = &self.nodes[x].value[i * cols..(i + 1) * cols];
            let mean = row.iter().fold(S::zero(), |a, &b| a + b) * inv_cols;
            let var = row.iter().fold(S::zero(), |a, &b| a + (b - mean) * (b - mean)) * inv_cols;
            let is = S::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * self.nodes[gamma].value[j] + self.nodes[beta].value[j]);
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(rows, cols, out, ng, Op::LayerNormRows { x, gamma, beta, xhat, inv_std })
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let total = self.nodes[x].value.iter().fold(S::zero(), |a, &b| a + b);
        let ng = self.needs(x);
        self.push(1, 1, vec![total], ng, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x].value.len();
        let total = self.nodes[x].value.iter().fold(S::zero(), |a, &b| a + b);
        let ng = self.needs(x);
        self.push(1, 1, vec![total / S::from_usize_c(n)], ng, Op::MeanAll(x))
    }

    /// Row sums: `[n, m] -> [n, 1]`.
    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = self.shape(x);
        let out: Vec<S> = (0..rows)
            .map(|i| {
                self.nodes[x].value[i * cols..(i + 1) * cols]
                    .iter()
                    .fold(S::zero(), |a, &b| a + b)
            })
            .collect();
        let ng = self.needs(x);
        self.push(rows, 1, out, ng, Op::SumRows(x))
    }

    // ---- shape surgery ----

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.shape(parts[0]).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.shape(p);
            assert_eq!(c, cols, "concat_rows: column mismatch");
            rows += r;
            out.extend_from_slice(&self.nodes[p].value);
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(rows, cols, out, ng, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.shape(parts[0]).0;
        let total_cols: usize = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape(p);
                assert_eq!(r, rows, "concat_cols: row mismatch");
                c
            })
            .sum();
        let mut out = Vec::with_capacity(rows * total_cols);
        for i in 0..rows {
            for &p in parts {
                let (_, c) = self.shape(p);
                out.extend_from_slice(&self.nodes[p].value[i * c..(i + 1) * c]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(rows, total_cols, out, ng, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (rows, cols) = self.shape(x);
        assert!(start + len <= rows, "slice_rows out of range");
        let out = self.nodes[x].value[start * cols..(start + len) * cols].to_vec();
        let ng = self.needs(x);
        self.push(len, cols, out, ng, Op::SliceRows { x, start })
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (rows, cols) = self.shape(x);
        assert!(start + len <= cols, "slice_cols out of range");
        let mut out = Vec::with_capacity(rows * len);
        for i in 0..rows {
            out.extend_from_slice(&self.nodes[x].value[i * cols + start..i * cols + start + len]);
        }
        let ng = self.needs(x);
        self.push(rows, len, out, ng, Op::SliceCols { x, start })
    }

    pub fn reverse_rows(&mut self, x: NodeId) -> NodeId {
        let (rows, cols) = self.shape(x);
        let mut out = Vec::with_capacity(rows * cols);
        for i in (0..rows).rev() {
            out.extend_from_slice(&self.nodes[x].value[i * cols..(i + 1) * cols]);
        }
        let ng = self.needs(x);
        self.push(rows, cols, out, ng, Op::ReverseRows(x))
    }

    /// Pick one column per row: `out[i, 0] = x[i, idx[i]]`.
    pub fn gather_cols(&mut self, x: NodeId, idx: &[usize]) -> NodeId {
        let (rows, cols) = self.shape(x);
        assert_eq!(idx.len(), rows, "gather_cols: one index per row");
        assert!(idx.iter().all(|&j| j < cols), "gather_cols: index out of range");
        let out: Vec<S> = idx.iter().enumerate().map(|(i, &j)| self.nodes[x].value[i * cols + j]).collect();
        let ng = self.needs(x);
        self.push(rows, 1, out, ng, Op::GatherCols { x, idx: idx.to_vec() })
    }

    /// Inverted dropout: keeps each element with probability `1 - rate`
    /// and rescales by `1 / (1 - rate)`. Rate 0 is the identity.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut crate::rng::SplitMix64) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate outside [0,1)");
        if rate == 0.0 {
            return x;
        }
        let (rows, cols) = self.shape(x);
        let keep_inv = S::from_f64_c(1.0 / (1.0 - rate));
        let mask: Vec<bool> = (0..rows * cols).map(|_| rng.next_f64() >= rate).collect();
        let out: Vec<S> = self.nodes[x]
            .value
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { v * keep_inv } else { S::zero() })
            .collect();
        let ng = self.needs(x);
        self.push(rows, cols, out, ng, Op::Dropout { x, mask, keep_inv })
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Returns one gradient per node
    /// that (transitively) requires grad and contributes to the loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<S>> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(MassError::NonScalarLoss(r, c));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss] = Some(vec![S::one()]);

        for id in (0..=loss).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(grad) = grads[id].take() else { continue };
            self.propagate(id, &grad, &mut grads);
            grads[id] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<S>>], id: NodeId, delta: &[S]) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(g) => {
                for (a, &b) in g.iter_mut().zip(delta) {
                    *a += b;
                }
            }
            None => grads[id] = Some(delta.to_vec()),
        }
    }

    /// Reduce a full-shape gradient onto a possibly broadcast operand.
    fn reduce_to(&self, grad: &[S], rows: usize, cols: usize, b: NodeId) -> Vec<S> {
        let (br, bc) = self.shape(b);
        if (br, bc) == (rows, cols) {
            return grad.to_vec();
        }
        if br == 1 {
            let mut out = vec![S::zero(); cols];
            for i in 0..rows {
                for j in 0..cols {
                    out[j] += grad[i * cols + j];
                }
            }
            out
        } else {
            let mut out = vec![S::zero(); rows];
            for i in 0..rows {
                for j in 0..cols {
                    out[i] += grad[i * cols + j];
                }
            }
            out
        }
    }

    /// Read operand `b` at full-shape position (i, j) under broadcast.
    fn bval(&self, b: NodeId, i: usize, j: usize, cols: usize) -> S {
        let (br, bc) = self.shape(b);
        let k = if br == 1 { j } else if bc == 1 { i } else { i * cols + j };
        self.nodes[b].value[k]
    }

    fn propagate(&self, id: NodeId, grad: &[S], grads: &mut [Option<Vec<S>>]) {
        let (rows, cols) = self.shape(id);
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, grad);
                let gb = self.reduce_to(grad, rows, cols, *b);
                self.accumulate(grads, *b, &gb);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, grad);
                let neg: Vec<S> = grad.iter().map(|&g| -g).collect();
                let gb = self.reduce_to(&neg, rows, cols, *b);
                self.accumulate(grads, *b, &gb);
            }
            Op::Mul(a, b) => {
                let mut ga = vec![S::zero(); rows * cols];
                let mut gb_full = vec![S::zero(); rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        let g = grad[i * cols + j];
                        ga[i * cols + j] = g * self.bval(*b, i, j, cols);
                        gb_full[i * cols + j] = g * self.nodes[*a].value[i * cols + j];
                    }
                }
                self.accumulate(grads, *a, &ga);
                let gb = self.reduce_to(&gb_full, rows, cols, *b);
                self.accumulate(grads, *b, &gb);
            }
            Op::Div(a, b) => {
                let mut ga = vec![S::zero(); rows * cols];
                let mut gb_full = vec![S::zero(); rows * cols];
                for i in 0..rows {
                    for j in 0..cols {
                        let g = grad[i * cols + j];
                        let bv = self.bval(*b, i, j, cols);
                        let av = self.nodes[*a].value[i * cols + j];
                        ga[i * cols + j] = g / bv;
                        gb_full[i * cols + j] = -g * av / (bv * bv);
                    }
                }
                self.accumulate(grads, *a, &ga);
                let gb = self.reduce_to(&gb_full, rows, cols, *b);
                self.accumulate(grads, *b, &gb);
            }
            Op::Matmul(a, b) => {
                let (n, k) = self.shape(*a);
                let (_, m) = self.shape(*b);
                if self.needs(*a) {
                    // dA = G * B^T
                    let bt = transpose_raw(&self.nodes[*b].value, k, m);
                    let ga = matmul_raw(grad, &bt, n, m, k);
                    self.accumulate(grads, *a, &ga);
                }
                if self.needs(*b) {
                    // dB = A^T * G
                    let at = transpose_raw(&self.nodes[*a].value, n, k);
                    let gb = matmul_raw(&at, grad, k, n, m);
                    self.accumulate(grads, *b, &gb);
                }
            }
            Op::Transpose(x) => {
                let gx = transpose_raw(grad, rows, cols);
                self.accumulate(grads, *x, &gx);
            }
            Op::Scale(x, c) => {
                let gx: Vec<S> = grad.iter().map(|&g| g * *c).collect();
                self.accumulate(grads, *x, &gx);
            }
            Op::Sigmoid(x) => {
                let gx: Vec<S> = grad
                    .iter()
                    .zip(&node.value)
                    .map(|(&g, &y)| g * y * (S::one() - y))
                    .collect();
                self.accumulate(grads, *x, &gx);
            }
            Op::Tanh(x) => {
                let gx: Vec<S> = grad
                    .iter()
                    .zip(&node.value)
                    .map(|(&g, &y)| g * (S::one() - y * y))
                    .collect();
                self.accumulate(grads, *x, &gx);
            }
            Op::Gelu(x) => {
                let gx: Vec<S> = grad
                    .iter()
                    .zip(&self.nodes[*x].value)
                    .map(|(&g, &v)| g * gelu_grad(v))
                    .collect();
                self.accumulate(grads, *x, &gx);
            }
            Op::Sqrt(x) => {
                let half = S::from_f64_c(0.5);
                let gx: Vec<S> = grad
                    .iter()
                    .zip(&node.value)
                    .map(|(&g, &y)| g * half / y)
                    .collect();
                self.accumulate(grads, *x, &gx);
            }
            Op::SoftmaxRows(x) => {
                let mut gx = vec![S::zero(); rows * cols];
                for i in 0..rows {
                    let y = &node.value[i * cols..(i + 1) * cols];
                    let g = &grad[i * cols..(i + 1) * cols];
                    let dot = y.iter().zip(g).fold(S::zero(), |a, (&yj, &gj)| a + yj * gj);
                    for j in 0..cols {
                        gx[i * cols + j] = y[j] * (g[j] - dot);
                    }
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::LogSoftmaxRows(x) => {
                let mut gx = vec![S::zero(); rows * cols];
                for i in 0..rows {
                    let out = &node.value[i * cols..(i + 1) * cols];
                    let g = &grad[i * cols..(i + 1) * cols];
                    let gsum = g.iter().fold(S::zero(), |a, &b| a + b);
                    for j in 0..cols {
                        gx[i * cols + j] = g[j] - out[j].exp() * gsum;
                    }
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::LayerNormRows { x, gamma, beta, xhat, inv_std } => {
                let gamma_v = &self.nodes[*gamma].value;
                let inv_cols = S::one() / S::from_usize_c(cols);
                let mut gx = vec![S::zero(); rows * cols];
                let mut ggamma = vec![S::zero(); cols];
                let mut gbeta = vec![S::zero(); cols];
                for i in 0..rows {
                    let g = &grad[i * cols..(i + 1) * cols];
                    let xh = &xhat[i * cols..(i + 1) * cols];
                    let mut mean_dxhat = S::zero();
                    let mut mean_dxhat_xhat = S::zero();
                    for j in 0..cols {
                        ggamma[j] += g[j] * xh[j];
                        gbeta[j] += g[j];
                        let dxh = g[j] * gamma_v[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xh[j];
                    }
                    mean_dxhat *= inv_cols;
                    mean_dxhat_xhat *= inv_cols;
                    for j in 0..cols {
                        let dxh = g[j] * gamma_v[j];
                        gx[i * cols + j] = inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                    }
                }
                self.accumulate(grads, *x, &gx);
                self.accumulate(grads, *gamma, &ggamma);
                self.accumulate(grads, *beta, &gbeta);
            }
            Op::SumAll(x) => {
                let (xr, xc) = self.shape(*x);
                let gx = vec![grad[0]; xr * xc];
                self.accumulate(grads, *x, &gx);
            }
            Op::MeanAll(x) => {
                let (xr, xc) = self.shape(*x);
                let scale = S::one() / S::from_usize_c(xr * xc);
                let gx = vec![grad[0] * scale; xr * xc];
                self.accumulate(grads, *x, &gx);
            }
            Op::SumRows(x) => {
                let (xr, xc) = self.shape(*x);
                let mut gx = vec![S::zero(); xr * xc];
                for i in 0..xr {
                    for j in 0..xc {
                        gx[i * xc + j] = grad[i];
                    }
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.shape(p);
                    let gp = &grad[offset..offset + pr * pc];
                    self.accumulate(grads, p, gp);
                    offset += pr * pc;
                }
            }
            Op::ConcatCols(parts) => {
                let mut col_offset = 0;
                for &p in parts {
                    let (pr, pc) = self.shape(p);
                    let mut gp = Vec::with_capacity(pr * pc);
                    for i in 0..pr {
                        gp.extend_from_slice(
                            &grad[i * cols + col_offset..i * cols + col_offset + pc],
                        );
                    }
                    self.accumulate(grads, p, &gp);
                    col_offset += pc;
                }
            }
            Op::SliceRows { x, start } => {
                let (xr, xc) = self.shape(*x);
                let mut gx = vec![S::zero(); xr * xc];
                gx[start * xc..start * xc + rows * cols].copy_from_slice(grad);
                self.accumulate(grads, *x, &gx);
            }
            Op::SliceCols { x, start } => {
                let (xr, xc) = self.shape(*x);
                let mut gx = vec![S::zero(); xr * xc];
                for i in 0..rows {
                    for j in 0..cols {
                        gx[i * xc + start + j] = grad[i * cols + j];
                    }
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::ReverseRows(x) => {
                let mut gx = Vec::with_capacity(rows * cols);
                for i in (0..rows).rev() {
                    gx.extend_from_slice(&grad[i * cols..(i + 1) * cols]);
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::GatherCols { x, idx } => {
                let (xr, xc) = self.shape(*x);
                let mut gx = vec![S::zero(); xr * xc];
                for (i, &j) in idx.iter().enumerate() {
                    gx[i * xc + j] = grad[i];
                }
                self.accumulate(grads, *x, &gx);
            }
            Op::Dropout { x, mask, keep_inv } => {
                let gx: Vec<S> = grad
                    .iter()
                    .zip(mask)
                    .map(|(&g, &m)| if m { g * *keep_inv } else { S::zero() })
                    .collect();
                self.accumulate(grads, *x, &gx);
            }
        }
    }
}

fn op_name<S: Scalar>(op: &Op<S>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::Matmul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::Scale(..) => "scale",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::Gelu(..) => "gelu",
        Op::Sqrt(..) => "sqrt",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::LogSoftmaxRows(..) => "log_softmax_rows",
        Op::LayerNormRows { .. } => "layer_norm_rows",
        Op::SumAll(..) => "sum_all",
        Op::MeanAll(..) => "mean_all",
        Op::SumRows(..) => "sum_rows",
        Op::ConcatRows(..) => "concat_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceRows { .. } => "slice_rows",
        Op::SliceCols { .. } => "slice_cols",
        Op::ReverseRows(..) => "reverse_rows",
        Op::GatherCols { .. } => "gather_cols",
        Op::Dropout { .. } => "dropout",
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

const GELU_COEF: f64 = 0.044715;

fn gelu<S: Scalar>(x: S) -> S {
    let c = S::from_f64_c((2.0 / std::f64::consts::PI).sqrt());
    let a = S::from_f64_c(GELU_COEF);
    let half = S::from_f64_c(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (S::one() + u.tanh())
}

fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::from_f64_c((2.0 / std::f64::consts::PI).sqrt());
    let a = S::from_f64_c(GELU_COEF);
    let half = S::from_f64_c(0.5);
    let three = S::from_f64_c(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + three * a * x * x)
}

fn softmax_row<S: Scalar>(row: &[S]) -> Vec<S> {
    let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(S::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

fn matmul_raw<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * m];
    for i in 0..n {
        for p in 0..k {
            let av = a[i * k + p];
            if av == S::zero() {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            let orow = &mut out[i * m..(i + 1) * m];
            for j in 0..m {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn transpose_raw<S: Scalar>(x: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = vec![S::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}
