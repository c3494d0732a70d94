//! The optimizer network: a two-layer LSTM body and a stochastic Gaussian
//! query head.
//!
//! One step consumes the previous query, the normalized response, and (when
//! the penalty channel is enabled) the normalized penalty, then emits a
//! diagonal Gaussian over the next query. All forward math is built on the
//! autodiff graph, so the same code path serves training (with parameter
//! nodes) and inference (with constant leaves).

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AdError, Graph, NodeId, Tensor};
use crate::rng as rngutil;

/// Floor added to the softplus scale output so sampling never degenerates.
pub const SIGMA_MIN: f64 = 1e-3;

/// The recurrent body is fixed at two stacked layers.
pub const LSTM_LAYERS: usize = 2;

const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("non-finite {channel} input to the network step")]
    NonFiniteInput { channel: &'static str },
    #[error("network has no penalty channel but one was supplied (or vice versa)")]
    PenaltyChannelMismatch,
    #[error(transparent)]
    Graph(#[from] AdError),
}

/// One LSTM layer's parameters. Gate rows are stacked `[input, forget,
/// candidate, output]`, each block `m` rows tall.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub b: Tensor,
}

/// All trainable parameters of the optimizer network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub d: usize,
    pub m: usize,
    pub with_penalty_channel: bool,
    pub layers: Vec<LstmLayer>,
    /// Head weights, `[2d, m]`: `d` rows for the mean, `d` for the pre-scale.
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl NetParams {
    /// First-layer input width: query, response channel, optional penalty
    /// channel.
    pub fn input_dim(&self) -> usize {
        self.d + 1 + usize::from(self.with_penalty_channel)
    }

    /// Uniform `U(-0.08, 0.08)` weights, zero biases except the forget-gate
    /// slice, which starts at 1.0.
    pub fn init<R: Rng>(d: usize, m: usize, with_penalty_channel: bool, rng: &mut R) -> Self {
        assert!(d >= 1 && m >= 1);
        let mut params =
            NetParams { d, m, with_penalty_channel, layers: Vec::new(), head_w: Tensor::scalar(0.0), head_b: Tensor::scalar(0.0) };
        let draw = |rows: usize, cols: usize, rng: &mut R| -> Tensor {
            let data = (0..rows * cols)
                .map(|_| rngutil::uniform(rng, -INIT_RANGE, INIT_RANGE))
                .collect();
            Tensor::matrix(rows, cols, data)
        };
        for layer in 0..LSTM_LAYERS {
            let in_dim = if layer == 0 { params.input_dim() } else { m };
            let w_x = draw(4 * m, in_dim, rng);
            let w_h = draw(4 * m, m, rng);
            let mut b = Tensor::vector(vec![0.0; 4 * m]);
            b.data[m..2 * m].iter_mut().for_each(|v| *v = 1.0);
            params.layers.push(LstmLayer { w_x, w_h, b });
        }
        params.head_w = draw(2 * d, m, rng);
        params.head_b = Tensor::vector(vec![0.0; 2 * d]);
        params
    }

    /// Fixed array naming and order shared by the flat views and the
    /// checkpoint format.
    pub fn arrays(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("w_x_{l}"), &layer.w_x));
            out.push((format!("w_h_{l}"), &layer.w_h));
            out.push((format!("b_{l}"), &layer.b));
        }
        out.push(("head_w".to_string(), &self.head_w));
        out.push(("head_b".to_string(), &self.head_b));
        out
    }

    fn arrays_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in self.layers.iter_mut() {
            out.push(&mut layer.w_x);
            out.push(&mut layer.w_h);
            out.push(&mut layer.b);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.arrays().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for (_, t) in self.arrays() {
            flat.extend_from_slice(&t.data);
        }
        flat
    }

    /// Writes a flat vector (in [`NetParams::flatten`] order) back into the
    /// parameter arrays.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut offset = 0;
        for t in self.arrays_mut() {
            let n = t.numel();
            t.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|(_, t)| t.is_finite())
    }

    /// Mounts the parameters into a graph, as trainable parameter nodes or
    /// frozen constants. Node creation order matches [`NetParams::flatten`].
    pub fn mount(&self, g: &mut Graph, trainable: bool) -> NetNodes {
        let mut leaf = |t: &Tensor| {
            if trainable {
                g.parameter(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        let layers: Vec<LayerNodes> = self
            .layers
            .iter()
            .map(|l| LayerNodes { w_x: leaf(&l.w_x), w_h: leaf(&l.w_h), b: leaf(&l.b) })
            .collect();
        let head_w = leaf(&self.head_w);
        let head_b = leaf(&self.head_b);
        NetNodes { d: self.d, m: self.m, with_penalty_channel: self.with_penalty_channel, layers, head_w, head_b }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNodes {
    pub w_x: NodeId,
    pub w_h: NodeId,
    pub b: NodeId,
}

/// Graph handles to the mounted parameters.
#[derive(Debug, Clone)]
pub struct NetNodes {
    pub d: usize,
    pub m: usize,
    pub with_penalty_channel: bool,
    pub layers: Vec<LayerNodes>,
    pub head_w: NodeId,
    pub head_b: NodeId,
}

impl NetNodes {
    /// Gradients of all parameters after a backward pass, flattened in
    /// [`NetParams::flatten`] order.
    pub fn grads_flat(&self, g: &Graph) -> Vec<f64> {
        let mut flat = Vec::new();
        for l in &self.layers {
            flat.extend_from_slice(g.grad(l.w_x));
            flat.extend_from_slice(g.grad(l.w_h));
            flat.extend_from_slice(g.grad(l.b));
        }
        flat.extend_from_slice(g.grad(self.head_w));
        flat.extend_from_slice(g.grad(self.head_b));
        flat
    }
}

/// Per-rollout recurrent state: hidden and cell nodes per layer. Zeroed at
/// rollout start and never shared between rollouts.
#[derive(Debug, Clone)]
pub struct NetState {
    pub h: Vec<NodeId>,
    pub c: Vec<NodeId>,
}

impl NetState {
    pub fn zeros(g: &mut Graph, m: usize) -> Self {
        let h = (0..LSTM_LAYERS).map(|_| g.constant_vec(vec![0.0; m])).collect();
        let c = (0..LSTM_LAYERS).map(|_| g.constant_vec(vec![0.0; m])).collect();
        NetState { h, c }
    }
}

/// Diagonal Gaussian over the next query: mean and strictly positive scale,
/// both `d`-vectors.
#[derive(Debug, Clone, Copy)]
pub struct QueryDistribution {
    pub mean: NodeId,
    pub scale: NodeId,
}

/// One recurrent step. Layer gates follow the standard LSTM recurrence;
/// the head reads the final layer's new hidden state and emits `2d` values:
/// the mean and a pre-scale passed through `softplus(.) + SIGMA_MIN`.
pub fn step(
    g: &mut Graph,
    net: &NetNodes,
    state: &NetState,
    x: NodeId,
    y_norm: NodeId,
    p_norm: Option<NodeId>,
) -> Result<(NetState, QueryDistribution), NetError> {
    if p_norm.is_some() != net.with_penalty_channel {
        return Err(NetError::PenaltyChannelMismatch);
    }
    for (channel, node) in [("query", Some(x)), ("response", Some(y_norm)), ("penalty", p_norm)] {
        if let Some(n) = node {
            if g.values(n).iter().any(|v| !v.is_finite()) {
                return Err(NetError::NonFiniteInput { channel });
            }
        }
    }

    let mut input = match p_norm {
        Some(p) => g.concat(&[x, y_norm, p])?,
        None => g.concat(&[x, y_norm])?,
    };
    let m = net.m;
    let mut next = NetState { h: Vec::with_capacity(LSTM_LAYERS), c: Vec::with_capacity(LSTM_LAYERS) };
    for (l, layer) in net.layers.iter().enumerate() {
        let from_input = g.matvec(layer.w_x, input)?;
        let from_hidden = g.matvec(layer.w_h, state.h[l])?;
        let pre = g.add(from_input, from_hidden)?;
        let z = g.add(pre, layer.b)?;
        let zi = g.slice(z, 0, m)?;
        let zf = g.slice(z, m, m)?;
        let zg = g.slice(z, 2 * m, m)?;
        let zo = g.slice(z, 3 * m, m)?;
        let gate_i = g.sigmoid(zi);
        let gate_f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let gate_o = g.sigmoid(zo);
        let keep = g.mul(gate_f, state.c[l])?;
        let write = g.mul(gate_i, cand)?;
        let c_next = g.add(keep, write)?;
        let c_act = g.tanh(c_next);
        let h_next = g.mul(gate_o, c_act)?;
        next.h.push(h_next);
        next.c.push(c_next);
        input = h_next;
    }

    let head_lin = g.matvec(net.head_w, input)?;
    let head = g.add(head_lin, net.head_b)?;
    let mean = g.slice(head, 0, net.d)?;
    let pre_scale = g.slice(head, net.d, net.d)?;
    let soft = g.softplus(pre_scale);
    let floor = g.constant_vec(vec![SIGMA_MIN; net.d]);
    let scale = g.add(soft, floor)?;
    Ok((next, QueryDistribution { mean, scale }))
}

/// Reparameterized draw `x = mean + scale * noise`; differentiable with
/// respect to both distribution parameters.
pub fn sample_query(
    g: &mut Graph,
    dist: &QueryDistribution,
    noise: &[f64],
) -> Result<NodeId, NetError> {
    let noise_node = g.constant_vec(noise.to_vec());
    let spread = g.mul(dist.scale, noise_node)?;
    Ok(g.add(dist.mean, spread)?)
}
