//! Reverse-mode automatic differentiation over dense f64 arrays.
//!
//! A [`Graph`] is an append-only tape: every operation evaluates its forward
//! values eagerly and records its parents, so creation order is topological
//! order and the backward pass is a single reverse sweep. This is enough to
//! backpropagate a meta-loss through a fully unrolled recurrent rollout,
//! Gaussian reparameterized sampling, objective-function fragments, and the
//! loss reductions, all in double precision.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a vector operand, got shape {shape:?}")]
    NotVector { op: &'static str, shape: Vec<usize> },
    #[error("slice [{start}, {start}+{len}) out of bounds for length {size}")]
    SliceOutOfBounds { start: usize, len: usize, size: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value encountered at parameter {param}, component {component}")]
    NonFinite { param: usize, component: usize },
}

/// Dense row-major array: `[]`-free shapes, scalars are `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// Row-major `rows x cols` matrix.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Tensor { shape: vec![rows, cols], data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle into a [`Graph`]; only valid for the graph that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Parameter,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Slice { input: NodeId, start: usize },
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    DivScalar { input: NodeId, divisor: f64 },
    Sum(NodeId),
    /// Prefix maximum; `argmax[t]` is the earliest index attaining the
    /// maximum of the first `t + 1` elements, frozen at forward time.
    RunningMax { input: NodeId, argmax: Vec<usize> },
    StopGrad(NodeId),
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Constant | Op::Parameter => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatVec(a, b) => vec![*a, *b],
            Op::Concat(parts) => parts.clone(),
            Op::Slice { input, .. }
            | Op::DivScalar { input, .. }
            | Op::RunningMax { input, .. } => vec![*input],
            Op::Tanh(x)
            | Op::Sigmoid(x)
            | Op::Relu(x)
            | Op::Softplus(x)
            | Op::Exp(x)
            | Op::Square(x)
            | Op::Sqrt(x)
            | Op::Sum(x)
            | Op::StopGrad(x) => vec![*x],
        }
    }
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Append-only computation tape with eager forward evaluation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, op: Op) -> NodeId {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        // The tape is append-only: every parent must already exist, which
        // makes creation order a topological order.
        debug_assert!(op.parents().iter().all(|p| p.0 < self.nodes.len()));
        let grad = vec![0.0; values.len()];
        self.nodes.push(Node { shape, values, grad, requires_grad, op });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.node(id).shape
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.node(id).values
    }

    pub fn value_scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.node(id).values.len(), 1);
        self.node(id).values[0]
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.node(id).grad
    }

    // -- leaves ----------------------------------------------------------

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t.shape, t.data, false, Op::Constant)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> NodeId {
        self.constant(Tensor::vector(data))
    }

    pub fn parameter(&mut self, t: Tensor) -> NodeId {
        self.push(t.shape, t.data, true, Op::Parameter)
    }

    // -- elementwise binary ----------------------------------------------

    fn binary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, AdError> {
        if self.node(a).shape != self.node(b).shape {
            return Err(AdError::ShapeMismatch {
                op: op_name,
                lhs: self.node(a).shape.clone(),
                rhs: self.node(b).shape.clone(),
            });
        }
        let values: Vec<f64> = self
            .node(a)
            .values
            .iter()
            .zip(&self.node(b).values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        let shape = self.node(a).shape.clone();
        Ok(self.push(shape, values, rg, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.binary("subtract", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AdError> {
        self.binary("multiply", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `[r, c]` matrix times `[c]` vector.
    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId, AdError> {
        let (ms, vs) = (self.node(m).shape.clone(), self.node(v).shape.clone());
        if ms.len() != 2 || vs.len() != 1 || ms[1] != vs[0] {
            return Err(AdError::ShapeMismatch { op: "matvec", lhs: ms, rhs: vs });
        }
        let (rows, cols) = (ms[0], ms[1]);
        let mut out = vec![0.0; rows];
        {
            let md = &self.node(m).values;
            let vd = &self.node(v).values;
            for r in 0..rows {
                let row = &md[r * cols..(r + 1) * cols];
                out[r] = row.iter().zip(vd).map(|(&a, &b)| a * b).sum();
            }
        }
        let rg = self.node(m).requires_grad || self.node(v).requires_grad;
        Ok(self.push(vec![rows], out, rg, Op::MatVec(m, v)))
    }

    /// Concatenates vector (or scalar) nodes into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, AdError> {
        let mut values = Vec::new();
        let mut rg = false;
        for &p in parts {
            let n = self.node(p);
            if n.shape.len() != 1 {
                return Err(AdError::NotVector { op: "concat", shape: n.shape.clone() });
            }
            values.extend_from_slice(&n.values);
            rg |= n.requires_grad;
        }
        let len = values.len();
        Ok(self.push(vec![len], values, rg, Op::Concat(parts.to_vec())))
    }

    /// Contiguous sub-vector `[start, start + len)` of a vector node.
    pub fn slice(&mut self, input: NodeId, start: usize, len: usize) -> Result<NodeId, AdError> {
        let n = self.node(input);
        if n.shape.len() != 1 {
            return Err(AdError::NotVector { op: "slice", shape: n.shape.clone() });
        }
        let size = n.values.len();
        if start + len > size {
            return Err(AdError::SliceOutOfBounds { start, len, size });
        }
        let values = n.values[start..start + len].to_vec();
        let rg = n.requires_grad;
        Ok(self.push(vec![len], values, rg, Op::Slice { input, start }))
    }

    // -- elementwise unary -------------------------------------------------

    fn unary(&mut self, input: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let values: Vec<f64> = self.node(input).values.iter().map(|&x| f(x)).collect();
        let shape = self.node(input).shape.clone();
        let rg = self.node(input).requires_grad;
        self.push(shape, values, rg, op)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn sqrt(&mut self, x: NodeId) -> NodeId {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn div_scalar(&mut self, x: NodeId, divisor: f64) -> NodeId {
        debug_assert!(divisor != 0.0 && divisor.is_finite());
        self.unary(x, |v| v / divisor, Op::DivScalar { input: x, divisor })
    }

    /// Sum-reduce to a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.node(x).values.iter().sum();
        let rg = self.node(x).requires_grad;
        self.push(vec![1], vec![total], rg, Op::Sum(x))
    }

    /// `out[t] = max(in[0..=t])` over a vector; the subgradient routes to the
    /// earliest argmax of each prefix.
    pub fn running_max(&mut self, x: NodeId) -> Result<NodeId, AdError> {
        let n = self.node(x);
        if n.shape.len() != 1 || n.values.is_empty() {
            return Err(AdError::NotVector { op: "running_max", shape: n.shape.clone() });
        }
        let mut out = Vec::with_capacity(n.values.len());
        let mut argmax = Vec::with_capacity(n.values.len());
        let (mut best, mut best_at) = (n.values[0], 0usize);
        for (i, &v) in n.values.iter().enumerate() {
            if v > best {
                best = v;
                best_at = i;
            }
            out.push(best);
            argmax.push(best_at);
        }
        let rg = n.requires_grad;
        let len = out.len();
        Ok(self.push(vec![len], out, rg, Op::RunningMax { input: x, argmax }))
    }

    /// Identity forward; blocks gradient flow.
    pub fn stop_gradient(&mut self, x: NodeId) -> NodeId {
        let values = self.node(x).values.clone();
        let shape = self.node(x).shape.clone();
        self.push(shape, values, false, Op::StopGrad(x))
    }

    // -- backward ----------------------------------------------------------

    /// Populates `grad` on every contributing node with `d loss / d node`.
    /// Grads are reset first, so repeated calls are idempotent.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), AdError> {
        if self.node(loss).values.len() != 1 {
            return Err(AdError::NonScalarLoss(self.node(loss).shape.clone()));
        }
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            // Parents always precede node i, so split the tape there. The
            // child node (with its output grad) lives in `rest`, disjoint
            // from `parents`, so no cloning is needed below.
            let (parents, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let g = &node.grad;
            match &node.op {
                Op::Constant | Op::Parameter => {}
                Op::Add(a, b) => {
                    with_grad(parents, *a, |ag, _| add_assign(ag, g, |gi| gi));
                    with_grad(parents, *b, |bg, _| add_assign(bg, g, |gi| gi));
                }
                Op::Sub(a, b) => {
                    with_grad(parents, *a, |ag, _| add_assign(ag, g, |gi| gi));
                    with_grad(parents, *b, |bg, _| add_assign(bg, g, |gi| -gi));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    with_grad(parents, a, |ag, ps| {
                        let bv = &ps[b.0].values;
                        for k in 0..g.len() {
                            ag[k] += g[k] * bv[k];
                        }
                    });
                    with_grad(parents, b, |bg, ps| {
                        let av = &ps[a.0].values;
                        for k in 0..g.len() {
                            bg[k] += g[k] * av[k];
                        }
                    });
                }
                Op::MatVec(m, v) => {
                    let (m, v) = (*m, *v);
                    let cols = parents[m.0].shape[1];
                    with_grad(parents, m, |mg, ps| {
                        let vv = &ps[v.0].values;
                        for (r, &gr) in g.iter().enumerate() {
                            let row = &mut mg[r * cols..(r + 1) * cols];
                            for (c, &vc) in vv.iter().enumerate() {
                                row[c] += gr * vc;
                            }
                        }
                    });
                    with_grad(parents, v, |vg, ps| {
                        let mv = &ps[m.0].values;
                        for (r, &gr) in g.iter().enumerate() {
                            let row = &mv[r * cols..(r + 1) * cols];
                            for (c, &mc) in row.iter().enumerate() {
                                vg[c] += gr * mc;
                            }
                        }
                    });
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = parents[p.0].values.len();
                        with_grad(parents, p, |pg, _| {
                            for k in 0..len {
                                pg[k] += g[offset + k];
                            }
                        });
                        offset += len;
                    }
                }
                Op::Slice { input, start } => {
                    let start = *start;
                    with_grad(parents, *input, |ig, _| {
                        for (k, &gi) in g.iter().enumerate() {
                            ig[start + k] += gi;
                        }
                    });
                }
                Op::Tanh(x) => {
                    let y = &node.values;
                    with_grad(parents, *x, |xg, _| {
                        for k in 0..g.len() {
                            xg[k] += g[k] * (1.0 - y[k] * y[k]);
                        }
                    });
                }
                Op::Sigmoid(x) => {
                    let y = &node.values;
                    with_grad(parents, *x, |xg, _| {
                        for k in 0..g.len() {
                            xg[k] += g[k] * y[k] * (1.0 - y[k]);
                        }
                    });
                }
                Op::Relu(x) => {
                    // Subgradient 0 at the kink.
                    let x = *x;
                    with_grad(parents, x, |xg, ps| {
                        let xv = &ps[x.0].values;
                        for k in 0..g.len() {
                            if xv[k] > 0.0 {
                                xg[k] += g[k];
                            }
                        }
                    });
                }
                Op::Softplus(x) => {
                    let x = *x;
                    with_grad(parents, x, |xg, ps| {
                        let xv = &ps[x.0].values;
                        for k in 0..g.len() {
                            xg[k] += g[k] * sigmoid(xv[k]);
                        }
                    });
                }
                Op::Exp(x) => {
                    let y = &node.values;
                    with_grad(parents, *x, |xg, _| {
                        for k in 0..g.len() {
                            xg[k] += g[k] * y[k];
                        }
                    });
                }
                Op::Square(x) => {
                    let x = *x;
                    with_grad(parents, x, |xg, ps| {
                        let xv = &ps[x.0].values;
                        for k in 0..g.len() {
                            xg[k] += g[k] * 2.0 * xv[k];
                        }
                    });
                }
                Op::Sqrt(x) => {
                    let y = &node.values;
                    with_grad(parents, *x, |xg, _| {
                        for k in 0..g.len() {
                            xg[k] += g[k] / (2.0 * y[k]);
                        }
                    });
                }
                Op::DivScalar { input, divisor } => {
                    let d = *divisor;
                    with_grad(parents, *input, |ig, _| add_assign(ig, g, |gi| gi / d));
                }
                Op::Sum(x) => {
                    let g0 = g[0];
                    with_grad(parents, *x, |xg, _| {
                        for gk in xg.iter_mut() {
                            *gk += g0;
                        }
                    });
                }
                Op::RunningMax { input, argmax } => {
                    with_grad(parents, *input, |ig, _| {
                        for (t, &gi) in g.iter().enumerate() {
                            ig[argmax[t]] += gi;
                        }
                    });
                }
                Op::StopGrad(_) => unreachable!("stop-gradient nodes never require grad"),
            }
        }
        Ok(())
    }
}

/// Runs `f` on the target parent's detached grad buffer, so `f` may read any
/// parent values (including the target's own) without aliasing.
fn with_grad(parents: &mut [Node], target: NodeId, f: impl FnOnce(&mut [f64], &[Node])) {
    if !parents[target.0].requires_grad {
        return;
    }
    let mut grad = std::mem::take(&mut parents[target.0].grad);
    f(&mut grad, parents);
    parents[target.0].grad = grad;
}

fn add_assign(acc: &mut [f64], src: &[f64], f: impl Fn(f64) -> f64) {
    for (a, &s) in acc.iter_mut().zip(src) {
        *a += f(s);
    }
}

/// Validates analytic gradients against central finite differences.
///
/// `builder` must deterministically construct a scalar loss from its
/// parameter nodes (same tape every call). A fourth-order central stencil
/// (`+-h`, `+-2h`) keeps the truncation error below the roundoff floor even
/// for near-zero gradient components. Returns the maximum relative error
/// over all parameter components, with the relative error defined as
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
#[allow(clippy::type_complexity, clippy::needless_range_loop)]
pub fn grad_check<F>(builder: F, params: &[Tensor], h: f64) -> Result<f64, AdError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, AdError>,
{
    assert!(h > 0.0);
    let eval = |inputs: &[Tensor], want_grads: bool| -> Result<(f64, Vec<Vec<f64>>), AdError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.parameter(t.clone())).collect();
        let loss = builder(&mut g, &ids)?;
        let value = g.value_scalar(loss);
        let grads = if want_grads {
            g.backward(loss)?;
            ids.iter().map(|&id| g.grad(id).to_vec()).collect()
        } else {
            Vec::new()
        };
        Ok((value, grads))
    };

    let (_, analytic) = eval(params, true)?;
    let mut max_rel = 0.0f64;
    let mut probe = params.to_vec();
    for (p, tensor) in params.iter().enumerate() {
        for k in 0..tensor.numel() {
            let orig = tensor.data[k];
            let mut at = |delta: f64| -> Result<f64, AdError> {
                probe[p].data[k] = orig + delta;
                let (value, _) = eval(&probe, false)?;
                probe[p].data[k] = orig;
                Ok(value)
            };
            let numeric = (at(-2.0 * h)? - 8.0 * at(-h)? + 8.0 * at(h)? - at(2.0 * h)?)
                / (12.0 * h);
            let a = analytic[p][k];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(AdError::NonFinite { param: p, component: k });
            }
            let rel = (a - numeric).abs() / (1e-8f64).max(a.abs() + numeric.abs());
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
