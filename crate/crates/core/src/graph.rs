//! Reverse-mode automatic differentiation over a define-by-run tape.
//!
//! A `Graph` is built fresh for every forward pass. Nodes hold their value
//! and the op that produced them; `backward` walks the tape in reverse
//! creation order, which is always a valid topological order. Backward is
//! a pure function of the tape: calling it twice yields identical results.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Identity,
    SoftmaxRows,
    Log,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    All,
    Rows,
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf { param: bool },
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    /// [m,n] plus a length-n vector broadcast over rows.
    AddBias(usize, usize),
    Act(usize, Activation),
    /// ln(max(x, floor)); positions below the floor get zero gradient.
    LogClamped(usize, f64),
    NormRows(usize, f64),
    NormCols(usize, f64),
    Reduce(usize, ReduceOp, Axis),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphError {
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    NotMatrix { op: &'static str, shape: Vec<usize> },
    LogDomain { value: f64 },
    NonScalarLoss { shape: Vec<usize> },
}

impl core::fmt::Display for GraphError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GraphError::ShapeMismatch { op, left, right } => {
                write!(f, "{op}: shape mismatch between {left:?} and {right:?}")
            }
            GraphError::NotMatrix { op, shape } => {
                write!(f, "{op}: expected a matrix, got shape {shape:?}")
            }
            GraphError::LogDomain { value } => {
                write!(f, "log of non-positive value {value}")
            }
            GraphError::NonScalarLoss { shape } => {
                write!(f, "backward needs a scalar loss, got shape {shape:?}")
            }
        }
    }
}

impl core::error::Error for GraphError {}

/// Gradients of a scalar loss with respect to every parameter leaf.
/// Parameters the loss never touched map to zero tensors.
#[derive(Debug)]
pub struct Gradients {
    by_node: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> &Tensor {
        self.by_node
            .get(&id.0)
            .expect("gradient queried for a non-parameter node")
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    clamp_events: usize,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), clamp_events: 0 }
    }

    /// Count of likelihood-clamp activations seen in forward passes so far.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable leaf: `backward` reports a gradient for it.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf { param: true })
    }

    /// Constant leaf: data and fixed matrices; no gradient is kept.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf { param: false })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if !ta.is_matrix() || !tb.is_matrix() || ta.shape()[1] != tb.shape()[0] {
            return Err(GraphError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let v = tensor::matmul(ta, tb);
        Ok(self.push(v, Op::MatMul(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, GraphError> {
        let ta = &self.nodes[a.0].value;
        if !ta.is_matrix() {
            return Err(GraphError::NotMatrix { op: "transpose", shape: ta.shape().to_vec() });
        }
        let v = tensor::transpose(ta);
        Ok(self.push(v, Op::Transpose(a.0)))
    }

    fn binary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, GraphError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(GraphError::ShapeMismatch {
                op: op_name,
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let v = ta.zip_map(tb, f);
        Ok(self.push(v, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| c * x);
        self.push(v, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a.0].value.map(|x| x + c);
        self.push(v, Op::AddScalar(a.0))
    }

    /// Adds a length-n bias vector to every row of an [m,n] matrix.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, GraphError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        let ok = ta.is_matrix() && tb.shape().len() == 1 && tb.shape()[0] == ta.shape()[1];
        if !ok {
            return Err(GraphError::ShapeMismatch {
                op: "add_bias",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for c in 0..n {
                data.push(ta.data()[r * n + c] + tb.data()[c]);
            }
        }
        Ok(self.push(Tensor::matrix(m, n, data), Op::AddBias(a.0, bias.0)))
    }

    pub fn activation(&mut self, a: NodeId, kind: Activation) -> Result<NodeId, GraphError> {
        let ta = &self.nodes[a.0].value;
        let v = match kind {
            Activation::Sigmoid => ta.map(sigmoid),
            Activation::Relu => ta.map(|x| if x > 0.0 { x } else { 0.0 }),
            Activation::Identity => ta.clone(),
            Activation::Exp => ta.map(libm::exp),
            Activation::Log => {
                if let Some(&bad) = ta.data().iter().find(|&&x| x <= 0.0) {
                    return Err(GraphError::LogDomain { value: bad });
                }
                ta.map(libm::log)
            }
            Activation::SoftmaxRows => {
                if !ta.is_matrix() {
                    return Err(GraphError::NotMatrix {
                        op: "softmax_rows",
                        shape: ta.shape().to_vec(),
                    });
                }
                softmax_rows(ta)
            }
        };
        Ok(self.push(v, Op::Act(a.0, kind)))
    }

    /// ln(max(x, floor)). Entries below the floor are counted as clamp
    /// events and receive zero gradient.
    pub fn log_clamped(&mut self, a: NodeId, floor: f64) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let clamped = ta.data().iter().filter(|&&x| x < floor).count();
        self.clamp_events += clamped;
        let v = ta.map(|x| libm::log(if x < floor { floor } else { x }));
        self.push(v, Op::LogClamped(a.0, floor))
    }

    /// Scales every row to unit L2 norm. Rows with norm < eps pass through
    /// unchanged and contribute zero gradient.
    pub fn normalize_rows(&mut self, a: NodeId, eps: f64) -> Result<NodeId, GraphError> {
        let ta = &self.nodes[a.0].value;
        if !ta.is_matrix() {
            return Err(GraphError::NotMatrix { op: "normalize_rows", shape: ta.shape().to_vec() });
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut data = ta.data().to_vec();
        for r in 0..m {
            let row = &mut data[r * n..(r + 1) * n];
            let norm = l2(row);
            if norm >= eps {
                for x in row.iter_mut() {
                    *x /= norm;
                }
            }
        }
        Ok(self.push(Tensor::matrix(m, n, data), Op::NormRows(a.0, eps)))
    }

    /// Column-wise counterpart of `normalize_rows`.
    pub fn normalize_cols(&mut self, a: NodeId, eps: f64) -> Result<NodeId, GraphError> {
        let ta = &self.nodes[a.0].value;
        if !ta.is_matrix() {
            return Err(GraphError::NotMatrix { op: "normalize_cols", shape: ta.shape().to_vec() });
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut data = ta.data().to_vec();
        for c in 0..n {
            let mut sq = 0.0;
            for r in 0..m {
                let x = data[r * n + c];
                sq += x * x;
            }
            let norm = libm::sqrt(sq);
            if norm >= eps {
                for r in 0..m {
                    data[r * n + c] /= norm;
                }
            }
        }
        Ok(self.push(Tensor::matrix(m, n, data), Op::NormCols(a.0, eps)))
    }

    /// Axis semantics: `Rows` reduces over rows (one value per column),
    /// `Cols` reduces over columns (one value per row), `All` to a scalar.
    pub fn reduce(&mut self, a: NodeId, op: ReduceOp, axis: Axis) -> Result<NodeId, GraphError> {
        let ta = &self.nodes[a.0].value;
        let v = match axis {
            Axis::All => {
                let s: f64 = ta.data().iter().sum();
                let v = match op {
                    ReduceOp::Sum => s,
                    ReduceOp::Mean => s / ta.numel() as f64,
                };
                Tensor::scalar(v)
            }
            Axis::Rows | Axis::Cols => {
                if !ta.is_matrix() {
                    return Err(GraphError::NotMatrix { op: "reduce", shape: ta.shape().to_vec() });
                }
                let (m, n) = (ta.shape()[0], ta.shape()[1]);
                match axis {
                    Axis::Rows => {
                        let mut out = vec![0.0; n];
                        for r in 0..m {
                            for c in 0..n {
                                out[c] += ta.data()[r * n + c];
                            }
                        }
                        if op == ReduceOp::Mean {
                            for x in out.iter_mut() {
                                *x /= m as f64;
                            }
                        }
                        Tensor::vector(out)
                    }
                    Axis::Cols => {
                        let mut out = vec![0.0; m];
                        for r in 0..m {
                            for c in 0..n {
                                out[r] += ta.data()[r * n + c];
                            }
                        }
                        if op == ReduceOp::Mean {
                            for x in out.iter_mut() {
                                *x /= n as f64;
                            }
                        }
                        Tensor::vector(out)
                    }
                    Axis::All => unreachable!(),
                }
            }
        };
        Ok(self.push(v, Op::Reduce(a.0, op, axis)))
    }

    /// Reverse sweep from a scalar loss. Returns gradients for every
    /// parameter leaf (zeros for parameters the loss never touched).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, GraphError> {
        let loss_t = &self.nodes[loss.0].value;
        if loss_t.numel() != 1 {
            return Err(GraphError::NonScalarLoss { shape: loss_t.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(loss_t.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backward_op(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf { param: true }) {
                grads[i] = Some(g);
            }
        }

        let mut by_node = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: true } = node.op {
                let g = grads[i].take().unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                by_node.insert(i, g);
            }
        }
        Ok(Gradients { by_node })
    }

    fn accum(&self, grads: &mut [Option<Tensor>], target: usize, delta: Tensor) {
        match &mut grads[target] {
            Some(t) => t.axpy(1.0, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backward_op(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[i].op {
            Op::Leaf { .. } => {}
            Op::MatMul(a, b) => {
                let ta = &self.nodes[*a].value;
                let tb = &self.nodes[*b].value;
                let da = tensor::matmul(g, &tensor::transpose(tb));
                let db = tensor::matmul(&tensor::transpose(ta), g);
                self.accum(grads, *a, da);
                self.accum(grads, *b, db);
            }
            Op::Transpose(a) => {
                self.accum(grads, *a, tensor::transpose(g));
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let ta = &self.nodes[*a].value;
                let tb = &self.nodes[*b].value;
                self.accum(grads, *a, g.zip_map(tb, |gx, bx| gx * bx));
                self.accum(grads, *b, g.zip_map(ta, |gx, ax| gx * ax));
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accum(grads, *a, g.map(|x| c * x));
            }
            Op::AddScalar(a) => {
                self.accum(grads, *a, g.clone());
            }
            Op::AddBias(a, bias) => {
                let (m, n) = (g.shape()[0], g.shape()[1]);
                let mut db = vec![0.0; n];
                for r in 0..m {
                    for c in 0..n {
                        db[c] += g.data()[r * n + c];
                    }
                }
                self.accum(grads, *a, g.clone());
                self.accum(grads, *bias, Tensor::vector(db));
            }
            Op::Act(a, kind) => {
                let x = &self.nodes[*a].value;
                let y = &self.nodes[i].value;
                let da = match kind {
                    Activation::Sigmoid => g.zip_map(y, |gx, yx| gx * yx * (1.0 - yx)),
                    Activation::Relu => g.zip_map(x, |gx, xv| if xv > 0.0 { gx } else { 0.0 }),
                    Activation::Identity => g.clone(),
                    Activation::Exp => g.zip_map(y, |gx, yx| gx * yx),
                    Activation::Log => g.zip_map(x, |gx, xv| gx / xv),
                    Activation::SoftmaxRows => {
                        let (m, n) = (y.shape()[0], y.shape()[1]);
                        let mut da = vec![0.0; m * n];
                        for r in 0..m {
                            let yr = &y.data()[r * n..(r + 1) * n];
                            let gr = &g.data()[r * n..(r + 1) * n];
                            let dot: f64 = yr.iter().zip(gr.iter()).map(|(&yv, &gv)| yv * gv).sum();
                            for c in 0..n {
                                da[r * n + c] = yr[c] * (gr[c] - dot);
                            }
                        }
                        Tensor::matrix(m, n, da)
                    }
                };
                self.accum(grads, *a, da);
            }
            Op::LogClamped(a, floor) => {
                let x = &self.nodes[*a].value;
                let floor = *floor;
                let da = g.zip_map(x, |gx, xv| if xv >= floor { gx / xv } else { 0.0 });
                self.accum(grads, *a, da);
            }
            Op::NormRows(a, eps) => {
                let x = &self.nodes[*a].value;
                let y = &self.nodes[i].value;
                let (m, n) = (x.shape()[0], x.shape()[1]);
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    let xr = &x.data()[r * n..(r + 1) * n];
                    let norm = l2(xr);
                    if norm < *eps {
                        continue;
                    }
                    let yr = &y.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let dot: f64 = yr.iter().zip(gr.iter()).map(|(&yv, &gv)| yv * gv).sum();
                    for c in 0..n {
                        da[r * n + c] = (gr[c] - yr[c] * dot) / norm;
                    }
                }
                self.accum(grads, *a, Tensor::matrix(m, n, da));
            }
            Op::NormCols(a, eps) => {
                let x = &self.nodes[*a].value;
                let y = &self.nodes[i].value;
                let (m, n) = (x.shape()[0], x.shape()[1]);
                let mut da = vec![0.0; m * n];
                for c in 0..n {
                    let mut sq = 0.0;
                    for r in 0..m {
                        let v = x.data()[r * n + c];
                        sq += v * v;
                    }
                    let norm = libm::sqrt(sq);
                    if norm < *eps {
                        continue;
                    }
                    let mut dot = 0.0;
                    for r in 0..m {
                        dot += y.data()[r * n + c] * g.data()[r * n + c];
                    }
                    for r in 0..m {
                        da[r * n + c] = (g.data()[r * n + c] - y.data()[r * n + c] * dot) / norm;
                    }
                }
                self.accum(grads, *a, Tensor::matrix(m, n, da));
            }
            Op::Reduce(a, op, axis) => {
                let x = &self.nodes[*a].value;
                let da = match axis {
                    Axis::All => {
                        let mut g0 = g.data()[0];
                        if *op == ReduceOp::Mean {
                            g0 /= x.numel() as f64;
                        }
                        Tensor::filled(x.shape(), g0)
                    }
                    Axis::Rows => {
                        let (m, n) = (x.shape()[0], x.shape()[1]);
                        let scale = if *op == ReduceOp::Mean { 1.0 / m as f64 } else { 1.0 };
                        let mut da = vec![0.0; m * n];
                        for r in 0..m {
                            for c in 0..n {
                                da[r * n + c] = g.data()[c] * scale;
                            }
                        }
                        Tensor::matrix(m, n, da)
                    }
                    Axis::Cols => {
                        let (m, n) = (x.shape()[0], x.shape()[1]);
                        let scale = if *op == ReduceOp::Mean { 1.0 / n as f64 } else { 1.0 };
                        let mut da = vec![0.0; m * n];
                        for r in 0..m {
                            for c in 0..n {
                                da[r * n + c] = g.data()[r] * scale;
                            }
                        }
                        Tensor::matrix(m, n, da)
                    }
                };
                self.accum(grads, *a, da);
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn l2(xs: &[f64]) -> f64 {
    libm::sqrt(xs.iter().map(|&x| x * x).sum())
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let (m, n) = (t.shape()[0], t.shape()[1]);
    let mut data = Vec::with_capacity(m * n);
    for r in 0..m {
        let row = t.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        let start = data.len();
        for &x in row {
            let e = libm::exp(x - max);
            sum += e;
            data.push(e);
        }
        for x in &mut data[start..] {
            *x /= sum;
        }
    }
    Tensor::matrix(m, n, data)
}

/// Compares analytic gradients against central finite differences.
///
/// `build` must construct the same scalar loss from the given parameter
/// leaves every time it is called. Returns the maximum over all parameter
/// entries of |analytic - numeric| / max(1, |analytic|, |numeric|).
pub fn grad_check<F>(mut build: F, params: &[Tensor], step: f64) -> Result<f64, GraphError>
where
    F: FnMut(&mut Graph, &[NodeId]) -> Result<NodeId, GraphError>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = build(&mut g, &ids)?;
    if g.value(loss).numel() != 1 {
        return Err(GraphError::NonScalarLoss { shape: g.value(loss).shape().to_vec() });
    }
    let grads = g.backward(loss)?;

    let mut eval = |ps: &[Tensor]| -> Result<f64, GraphError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ps.iter().map(|p| g.param(p.clone())).collect();
        let loss = build(&mut g, &ids)?;
        Ok(g.value(loss).data()[0])
    };

    let mut max_err = 0.0f64;
    for (pi, id) in ids.iter().enumerate() {
        let analytic = grads.wrt(*id);
        for e in 0..params[pi].numel() {
            let orig = params[pi].data()[e];
            let mut ps = params.to_vec();
            ps[pi].data_mut()[e] = orig + step;
            let up = eval(&ps)?;
            ps[pi].data_mut()[e] = orig - step;
            let down = eval(&ps)?;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[e];
            let denom = 1.0f64.max(a.abs()).max(numeric.abs());
            max_err = max_err.max((a - numeric).abs() / denom);
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2x2(a: f64, b: f64, c: f64, d: f64) -> Tensor {
        Tensor::matrix(2, 2, vec![a, b, c, d])
    }

    #[test]
    fn test_sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![0.0]));
        let y = g.activation(x, Activation::Sigmoid).unwrap();
        assert_eq!(g.value(y).data()[0], 0.5);
    }

    #[test]
    fn test_relu_forward() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![-1.0, 2.0]));
        let y = g.activation(x, Activation::Relu).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn test_softmax_uniform_row() {
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(1, 4, vec![3.0; 4]));
        let y = g.activation(x, Activation::SoftmaxRows).unwrap();
        for &v in g.value(y).data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn test_softmax_rows_sum_to_one() {
        let mut r = crate::rng::DetRng::new(1);
        for _ in 0..50 {
            let data: Vec<f64> = (0..12).map(|_| r.uniform(-8.0, 8.0)).collect();
            let mut g = Graph::new();
            let x = g.input(Tensor::matrix(3, 4, data));
            let y = g.activation(x, Activation::SoftmaxRows).unwrap();
            let yt = g.value(y);
            for row in 0..3 {
                let s: f64 = yt.row(row).iter().sum();
                assert!((s - 1.0).abs() <= 1e-12, "row sum {s}");
                assert!(yt.row(row).iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn test_log_rejects_non_positive() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 0.0]));
        let err = g.activation(x, Activation::Log).unwrap_err();
        assert!(matches!(err, GraphError::LogDomain { .. }));
    }

    #[test]
    fn test_exp_log_round_trip() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![0.3, 1.7, 2.5]));
        let e = g.activation(x, Activation::Exp).unwrap();
        let l = g.activation(e, Activation::Log).unwrap();
        for (a, b) in g.value(l).data().iter().zip([0.3, 1.7, 2.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn test_log_clamped_counts_events() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![0.5, 1e-12, 1e-11]));
        let y = g.log_clamped(x, 1e-10);
        assert_eq!(g.clamp_events(), 2);
        assert_eq!(g.value(y).data()[1], libm::log(1e-10));
    }

    #[test]
    fn test_normalize_rows_three_four_five() {
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(1, 2, vec![3.0, 4.0]));
        let y = g.normalize_rows(x, 1e-12).unwrap();
        assert!((g.value(y).data()[0] - 0.6).abs() < 1e-15);
        assert!((g.value(y).data()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn test_normalize_rows_zero_row_unchanged() {
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(2, 2, vec![0.0, 0.0, 3.0, 4.0]));
        let y = g.normalize_rows(x, 1e-12).unwrap();
        assert_eq!(&g.value(y).data()[..2], &[0.0, 0.0]);
    }

    #[test]
    fn test_normalize_rows_idempotent_on_unit_rows() {
        let mut r = crate::rng::DetRng::new(4);
        let data: Vec<f64> = (0..20).map(|_| r.uniform(-1.0, 1.0)).collect();
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(4, 5, data));
        let y1 = g.normalize_rows(x, 1e-12).unwrap();
        let y2 = g.normalize_rows(y1, 1e-12).unwrap();
        for r in 0..4 {
            let norm: f64 = l2(g.value(y2).row(r));
            assert!((norm - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn test_normalize_cols_matches_transposed_rows() {
        let mut r = crate::rng::DetRng::new(9);
        let data: Vec<f64> = (0..15).map(|_| r.uniform(-2.0, 2.0)).collect();
        let t = Tensor::matrix(3, 5, data);

        let mut g = Graph::new();
        let x = g.input(t.clone());
        let via_cols = g.normalize_cols(x, 1e-12).unwrap();

        let xt = g.input(tensor::transpose(&t));
        let rows = g.normalize_rows(xt, 1e-12).unwrap();
        let via_rows = tensor::transpose(g.value(rows));

        for (a, b) in g.value(via_cols).data().iter().zip(via_rows.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn test_reduce_examples() {
        let mut g = Graph::new();
        let x = g.input(t2x2(1.0, 2.0, 3.0, 4.0));
        let all = g.reduce(x, ReduceOp::Sum, Axis::All).unwrap();
        assert_eq!(g.value(all).item(), 10.0);
        let rows = g.reduce(x, ReduceOp::Sum, Axis::Rows).unwrap();
        assert_eq!(g.value(rows).data(), &[4.0, 6.0]);
        let cols = g.reduce(x, ReduceOp::Sum, Axis::Cols).unwrap();
        assert_eq!(g.value(cols).data(), &[3.0, 7.0]);
        let mean = g.reduce(x, ReduceOp::Mean, Axis::All).unwrap();
        assert_eq!(g.value(mean).item(), 2.5);
    }

    #[test]
    fn test_mean_of_constant_tensor() {
        let mut g = Graph::new();
        let x = g.input(Tensor::filled(&[3, 7], 2.5));
        let m = g.reduce(x, ReduceOp::Mean, Axis::All).unwrap();
        assert_eq!(g.value(m).item(), 2.5);
    }

    #[test]
    fn test_matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[4, 2]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn test_backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let p = g.param(Tensor::matrix(2, 3, vec![1.0, -2.0, 0.5, 3.0, 9.0, -1.0]));
        let s = g.reduce(p, ReduceOp::Sum, Axis::All).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(p).data(), &[1.0; 6]);
    }

    #[test]
    fn test_backward_of_square_sum() {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![1.0, 2.0]));
        let sq = g.mul(p, p).unwrap();
        let s = g.reduce(sq, ReduceOp::Sum, Axis::All).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(p).data(), &[2.0, 4.0]);
    }

    #[test]
    fn test_backward_twice_identical() {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![0.3, -1.2, 2.0]));
        let e = g.activation(p, Activation::Exp).unwrap();
        let s = g.reduce(e, ReduceOp::Sum, Axis::All).unwrap();
        let g1 = g.backward(s).unwrap();
        let g2 = g.backward(s).unwrap();
        assert_eq!(g1.wrt(p), g2.wrt(p));
    }

    #[test]
    fn test_unused_param_gets_zero_gradient() {
        let mut g = Graph::new();
        let used = g.param(Tensor::vector(vec![1.0, 2.0]));
        let unused = g.param(Tensor::matrix(2, 2, vec![5.0; 4]));
        let s = g.reduce(used, ReduceOp::Sum, Axis::All).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(unused).data(), &[0.0; 4]);
    }

    #[test]
    fn test_non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![1.0, 2.0]));
        let err = g.backward(p).unwrap_err();
        assert!(matches!(err, GraphError::NonScalarLoss { .. }));
    }

    #[test]
    fn test_relu_gradient_zero_at_kink() {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![0.0, -1.0, 2.0]));
        let y = g.activation(p, Activation::Relu).unwrap();
        let s = g.reduce(y, ReduceOp::Sum, Axis::All).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(p).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn test_grad_check_linear_is_exact() {
        let w = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let err = grad_check(
            |g, ps| {
                let x = g.input(Tensor::matrix(2, 2, vec![0.5, -1.0, 2.0, 0.25]));
                let y = g.matmul(ps[0], x)?;
                g.reduce(y, ReduceOp::Sum, Axis::All)
            },
            &[w],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-10, "relative error {err}");
    }

    #[test]
    fn test_grad_check_sigmoid_chain() {
        // d/dx sigmoid(x) at 0 is exactly 0.25.
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![0.0]));
        let y = g.activation(p, Activation::Sigmoid).unwrap();
        let s = g.reduce(y, ReduceOp::Sum, Axis::All).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(p).data()[0], 0.25);

        let err = grad_check(
            |g, ps| {
                let y = g.activation(ps[0], Activation::Sigmoid)?;
                g.reduce(y, ReduceOp::Sum, Axis::All)
            },
            &[Tensor::vector(vec![0.0])],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn test_log_clamped_zero_gradient_below_floor() {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![1e-13, 0.5]));
        let y = g.log_clamped(p, 1e-10);
        let s = g.reduce(y, ReduceOp::Sum, Axis::All).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(p).data()[0], 0.0);
        assert_eq!(grads.wrt(p).data()[1], 2.0);
    }

    #[test]
    fn test_normalize_rows_guarded_row_zero_gradient() {
        let mut g = Graph::new();
        let p = g.param(Tensor::matrix(2, 2, vec![0.0, 0.0, 3.0, 4.0]));
        let y = g.normalize_rows(p, 1e-12).unwrap();
        let s = g.reduce(y, ReduceOp::Sum, Axis::All).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(&grads.wrt(p).data()[..2], &[0.0, 0.0]);
        assert!(grads.wrt(p).data()[2..].iter().any(|&x| x != 0.0));
    }
}
