//! Meta-training losses and incremental normalization.
//!
//! The discounted regret loss drives the main trained variants, the
//! observed-improvement loss reproduces the earlier improvement-trained
//! optimizer, and the domain-constraint loss penalizes infeasible queries.
//! Each loss exists twice: a plain form over recorded sequences (used for
//! reporting and as the test oracle) and a graph form over tape nodes (used
//! for backpropagation). The two must agree, and tests hold them to that.

use thiserror::Error;

use crate::autodiff::{AdError, Graph, NodeId};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("loss requires a horizon of at least 2 steps, got {0}")]
    HorizonTooShort(usize),
    #[error(transparent)]
    Graph(#[from] AdError),
}

/// Per-step discount `gamma^{-t}`; later steps weigh exponentially more for
/// `gamma < 1`.
pub fn discount(gamma: f64, t: usize) -> f64 {
    debug_assert!(gamma > 0.0 && gamma <= 1.0);
    gamma.powi(-(t as i32))
}

// ---------------------------------------------------------------------------
// Incremental normalization
// ---------------------------------------------------------------------------

/// Running statistics for incremental normalization:
/// `y ~> (y - mean_t) / sqrt(var_t + eps)` with population variance over
/// everything observed so far. Applied to responses and, in the constrained
/// setting, to penalties as well.
#[derive(Debug, Clone, PartialEq)]
pub struct NormState {
    count: usize,
    sum: f64,
    sum_sq: f64,
    eps: f64,
}

impl NormState {
    pub fn new(eps: f64) -> Self {
        assert!(eps > 0.0);
        NormState { count: 0, sum: 0.0, sum_sq: 0.0, eps }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    /// Population variance; clamped at zero against cancellation.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let mean = self.mean();
        (self.sum_sq / self.count as f64 - mean * mean).max(0.0)
    }

    /// Denominator of the transform for the current statistics.
    pub fn scale(&self) -> f64 {
        (self.variance() + self.eps).sqrt()
    }

    /// Folds `y` into the statistics and returns its normalized value.
    pub fn update(&mut self, y: f64) -> f64 {
        debug_assert!(y.is_finite());
        self.count += 1;
        self.sum += y;
        self.sum_sq += y * y;
        (y - self.mean()) / self.scale()
    }
}

// ---------------------------------------------------------------------------
// Plain losses (reporting + oracles)
// ---------------------------------------------------------------------------

/// Discounted regret loss over a best-so-far prefix sequence:
/// `sum_{t=2}^{T} gamma^{-t} ReLU(y_opt - best[t])`.
pub fn regret_loss(best_prefix: &[f64], y_opt: f64, gamma: f64) -> Result<f64, LossError> {
    let horizon = best_prefix.len();
    if horizon < 2 {
        return Err(LossError::HorizonTooShort(horizon));
    }
    Ok((2..=horizon)
        .map(|t| discount(gamma, t) * (y_opt - best_prefix[t - 1]).max(0.0))
        .sum())
}

/// Observed-improvement loss: `sum_{t=2}^{T} gamma^{-t} ReLU(y_t - max_{i<t} y_i)`.
/// Never consults the optimum.
pub fn oi_loss(y_seq: &[f64], gamma: f64) -> Result<f64, LossError> {
    let horizon = y_seq.len();
    if horizon < 2 {
        return Err(LossError::HorizonTooShort(horizon));
    }
    let mut best = y_seq[0];
    let mut total = 0.0;
    for t in 2..=horizon {
        let y = y_seq[t - 1];
        total += discount(gamma, t) * (y - best).max(0.0);
        best = best.max(y);
    }
    Ok(total)
}

/// Domain-constraint loss over raw penalties: `(1/C) sum_f sum_{t=2}^{T} p_t`.
/// Raw (unnormalized) penalties keep the weight `lambda` comparable across
/// functions; the normalized penalty is only an input channel.
pub fn dc_loss(penalty_seqs: &[Vec<f64>], constraint_count: usize) -> f64 {
    assert!(constraint_count >= 1);
    let total: f64 = penalty_seqs.iter().map(|p| p.iter().skip(1).sum::<f64>()).sum();
    total / constraint_count as f64
}

/// Combined objective `L_R + lambda * L_D`.
pub fn total_loss(l_r: f64, l_d: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    l_r + lambda * l_d
}

// ---------------------------------------------------------------------------
// Graph losses (training)
// ---------------------------------------------------------------------------

/// Graph form of [`regret_loss`] over a best-so-far prefix node of length T.
/// Differentiable through the prefix maxima via the argmax subgradient.
pub fn regret_loss_graph(
    g: &mut Graph,
    best_prefix: NodeId,
    y_opt: f64,
    gamma: f64,
) -> Result<NodeId, LossError> {
    let horizon = g.values(best_prefix).len();
    if horizon < 2 {
        return Err(LossError::HorizonTooShort(horizon));
    }
    let tail = g.slice(best_prefix, 1, horizon - 1)?;
    let target = g.constant_vec(vec![y_opt; horizon - 1]);
    let gap = g.sub(target, tail)?;
    let clipped = g.relu(gap);
    let weights = g.constant_vec((2..=horizon).map(|t| discount(gamma, t)).collect());
    let weighted = g.mul(clipped, weights)?;
    Ok(g.sum(weighted))
}

/// Graph form of [`oi_loss`] over the raw response sequence node.
pub fn oi_loss_graph(g: &mut Graph, y_seq: NodeId, gamma: f64) -> Result<NodeId, LossError> {
    let horizon = g.values(y_seq).len();
    if horizon < 2 {
        return Err(LossError::HorizonTooShort(horizon));
    }
    let best = g.running_max(y_seq)?;
    let prev_best = g.slice(best, 0, horizon - 1)?;
    let tail = g.slice(y_seq, 1, horizon - 1)?;
    let improvement = g.sub(tail, prev_best)?;
    let clipped = g.relu(improvement);
    let weights = g.constant_vec((2..=horizon).map(|t| discount(gamma, t)).collect());
    let weighted = g.mul(clipped, weights)?;
    Ok(g.sum(weighted))
}

/// Graph form of the single-function domain-constraint term
/// `(1/C) sum_{t=2}^{T} p_t`; `penalties` holds one scalar node per step.
pub fn dc_loss_graph(
    g: &mut Graph,
    penalties: &[NodeId],
    constraint_count: usize,
) -> Result<NodeId, LossError> {
    if penalties.len() < 2 {
        return Err(LossError::HorizonTooShort(penalties.len()));
    }
    assert!(constraint_count >= 1);
    let tail = g.concat(&penalties[1..])?;
    let total = g.sum(tail);
    Ok(g.div_scalar(total, constraint_count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 0.05;

    fn prefix_max(y: &[f64]) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        y.iter()
            .map(|&v| {
                best = best.max(v);
                best
            })
            .collect()
    }

    #[test]
    fn first_observation_normalizes_to_zero() {
        let mut ns = NormState::new(EPS);
        assert_eq!(ns.update(4.0), 0.0);
        assert_eq!(ns.mean(), 4.0);
        assert_eq!(ns.variance(), 0.0);
    }

    #[test]
    fn normalization_worked_example() {
        let mut ns = NormState::new(EPS);
        ns.update(1.0);
        let y2 = ns.update(3.0);
        // mean 2, population variance 1, so (3 - 2) / sqrt(1.05).
        assert!((y2 - 0.975900072948533).abs() < 1e-12, "{y2}");
    }

    #[test]
    fn constant_history_normalizes_to_zero() {
        let mut ns = NormState::new(EPS);
        ns.update(5.0);
        ns.update(5.0);
        assert_eq!(ns.update(5.0), 0.0);
    }

    #[test]
    fn statistics_match_two_pass_computation() {
        let history = [0.3, -2.0, 11.5, 4.25, -0.75, 3.0];
        let mut ns = NormState::new(EPS);
        for (t, &y) in history.iter().enumerate() {
            ns.update(y);
            let seen = &history[..=t];
            let mean = seen.iter().sum::<f64>() / seen.len() as f64;
            let var = seen.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / seen.len() as f64;
            assert!((ns.mean() - mean).abs() < 1e-12);
            assert!((ns.variance() - var).abs() < 1e-12);
        }
    }

    #[test]
    fn regret_loss_worked_example() {
        let l = regret_loss(&[0.2, 0.5, 0.9], 1.0, 0.5).unwrap();
        assert!((l - 2.8).abs() < 1e-12, "{l}");
    }

    #[test]
    fn regret_loss_zero_once_target_reached_by_second_step() {
        let l = regret_loss(&[0.5, 1.0, 1.0, 1.2], 1.0, 0.9).unwrap();
        assert_eq!(l, 0.0);
        // And zero forces the prefix max to reach the target at t = 2.
        let l = regret_loss(&[0.5, 0.999, 1.0, 1.2], 1.0, 0.9).unwrap();
        assert!(l > 0.0);
    }

    #[test]
    fn regret_loss_undiscounted_is_plain_sum() {
        let best = [0.1, 0.4, 0.6];
        let l = regret_loss(&best, 1.0, 1.0).unwrap();
        assert!((l - (0.6 + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn losses_reject_short_horizons() {
        assert!(matches!(regret_loss(&[0.1], 1.0, 0.9), Err(LossError::HorizonTooShort(1))));
        assert!(matches!(oi_loss(&[0.1], 0.9), Err(LossError::HorizonTooShort(1))));
    }

    #[test]
    fn oi_loss_worked_example() {
        let l = oi_loss(&[0.2, 0.5, 0.4], 1.0).unwrap();
        assert!((l - 0.3).abs() < 1e-12, "{l}");
    }

    #[test]
    fn oi_loss_zero_without_improvement() {
        assert_eq!(oi_loss(&[2.0, 1.5, 1.5, 0.0], 0.98).unwrap(), 0.0);
    }

    #[test]
    fn oi_loss_counts_unit_improvements() {
        let l = oi_loss(&[0.0, 1.0, 2.0], 1.0).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dc_loss_examples() {
        assert_eq!(dc_loss(&[vec![0.0, 0.0, 0.0]], 3), 0.0);
        let l = dc_loss(&[vec![7.0, 1.0, 3.0]], 2);
        assert!((l - 2.0).abs() < 1e-12);
        let halved = dc_loss(&[vec![7.0, 1.0, 3.0]], 4);
        assert!((halved - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(1.0, 2.0, 0.0), 1.0);
        assert!((total_loss(1.0, 2.0, 0.2) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn graph_losses_match_plain_losses() {
        let y = [0.25, -0.9, 1.3, 0.7, 1.31, -4.0];
        let best = prefix_max(&y);
        for gamma in [0.5, 0.98, 1.0] {
            let mut g = Graph::new();
            let y_node = g.constant_vec(y.to_vec());
            let best_node = g.running_max(y_node).unwrap();
            let lr = regret_loss_graph(&mut g, best_node, 1.4, gamma).unwrap();
            let loi = oi_loss_graph(&mut g, y_node, gamma).unwrap();
            assert!(
                (g.value_scalar(lr) - regret_loss(&best, 1.4, gamma).unwrap()).abs() < 1e-12
            );
            assert!((g.value_scalar(loi) - oi_loss(&y, gamma).unwrap()).abs() < 1e-12);
        }

        let penalties = [vec![0.3, 1.0, 0.0, 2.5], vec![0.0, 0.5, 0.5, 0.0]];
        let mut g = Graph::new();
        let per_fn: Vec<f64> = penalties
            .iter()
            .map(|seq| {
                let nodes: Vec<_> = seq.iter().map(|&p| g.constant_scalar(p)).collect();
                let node = dc_loss_graph(&mut g, &nodes, 4).unwrap();
                g.value_scalar(node)
            })
            .collect();
        assert!((per_fn.iter().sum::<f64>() - dc_loss(&penalties, 4)).abs() < 1e-12);
    }

    #[test]
    fn graph_regret_routes_gradient_to_latest_argmax_improvement() {
        // y = [0.1, 0.8, 0.5]: prefixes peak at index 1 from t=2 on, so all
        // gradient lands on y_2.
        let mut g = Graph::new();
        let y = g.parameter(crate::autodiff::Tensor::vector(vec![0.1, 0.8, 0.5]));
        let best = g.running_max(y).unwrap();
        let loss = regret_loss_graph(&mut g, best, 1.0, 1.0).unwrap();
        g.backward(loss).unwrap();
        // d loss / d y_2 = -(weight at t=2) - (weight at t=3) = -2.
        assert_eq!(g.grad(y), &[0.0, -2.0, 0.0]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn normalized_outputs_are_range_bounded(
                history in proptest::collection::vec(-100.0f64..100.0, 1..40),
            ) {
                let mut ns = NormState::new(EPS);
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &y in &history {
                    lo = lo.min(y);
                    hi = hi.max(y);
                    let normalized = ns.update(y);
                    let bound = (hi - lo) / EPS.sqrt() + 1e-9;
                    prop_assert!(normalized.abs() <= bound, "{} > {}", normalized.abs(), bound);
                }
            }

            #[test]
            fn regret_loss_non_increasing_in_each_response(
                y in proptest::collection::vec(-2.0f64..2.0, 2..12),
                idx in any::<prop::sample::Index>(),
                bump in 0.01f64..1.0,
            ) {
                let y_opt = 2.5;
                let base = regret_loss(&prefix_max(&y), y_opt, 0.9).unwrap();
                let mut raised = y.clone();
                let i = idx.index(raised.len());
                raised[i] += bump;
                let after = regret_loss(&prefix_max(&raised), y_opt, 0.9).unwrap();
                prop_assert!(after <= base + 1e-12);
            }

            #[test]
            fn regret_zero_iff_target_reached_at_step_two(
                y in proptest::collection::vec(-2.0f64..2.0, 2..12),
            ) {
                let y_opt = 1.0;
                let best = prefix_max(&y);
                let loss = regret_loss(&best, y_opt, 0.98).unwrap();
                prop_assert_eq!(loss == 0.0, best[1] >= y_opt);
            }
        }
    }
}
