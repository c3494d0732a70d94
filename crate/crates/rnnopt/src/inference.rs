//! Deployment runtime: drive a trained optimizer against an opaque
//! evaluator for a budget of `T` queries.
//!
//! The runtime owns the protocol rules: the first query is uniform over
//! `[-4, 4]^d`, incremental normalization of responses is always on at
//! inference time, constrained runs unroll up to `5 T` proposal steps and
//! only feasible proposals reach the evaluator (infeasible ones freeze the
//! response channel), and the reported regret curve always has exactly `T`
//! entries. The optimizer itself never sees the objective's optimum; regret
//! is computed in the reporting layer.

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AdError, Graph};
use crate::losses::NormState;
use crate::metatrain::{Checkpoint, Variant};
use crate::network::{self, NetError, NetParams, NetState};
use crate::rng as rngutil;
use crate::synthfn::{BenchmarkFn, ConstraintSet, GmmDf};

/// First-query domain, shared by training and inference.
pub const INIT_LO: f64 = -4.0;
pub const INIT_HI: f64 = 4.0;

/// Constrained runs may propose up to this multiple of the budget.
pub const UNROLL_FACTOR: usize = 5;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("checkpoint dimension {ckpt} does not match black box dimension {bb}")]
    DimensionMismatch { ckpt: usize, bb: usize },
    #[error("evaluator returned a non-finite response at step {step}")]
    NonFiniteResponse { step: usize },
    #[error("variant {0} does not run in constrained mode")]
    VariantNotConstrained(&'static str),
    #[error("constrained mode for this variant requires a checkpoint {expected} a penalty channel")]
    PenaltyChannel { expected: &'static str },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Graph(#[from] AdError),
}

/// Whether the next query is sampled from the head's Gaussian or taken at
/// its mean (ablation switch; sampling is the default protocol).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryMode {
    #[default]
    Sample,
    Mean,
}

impl QueryMode {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "sample" => Some(QueryMode::Sample),
            "mean" => Some(QueryMode::Mean),
            _ => None,
        }
    }
}

/// Inference-time switches. Normalization is on for every variant by
/// protocol; the off position exists for the saturation ablation, where raw
/// responses are fed straight into the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferOptions {
    pub mode: QueryMode,
    pub normalize: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions { mode: QueryMode::Sample, normalize: true }
    }
}

type Evaluator<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

/// An opaque evaluator. Exposes only the dimension and point evaluation;
/// any known optimum stays outside, in the reporting layer.
pub struct BlackBox<'a> {
    d: usize,
    eval: Evaluator<'a>,
}

impl<'a> BlackBox<'a> {
    pub fn new(d: usize, eval: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        BlackBox { d, eval: Box::new(eval) }
    }

    pub fn from_gmm(f: &'a GmmDf) -> Self {
        BlackBox::new(f.d, move |x| f.eval(x))
    }

    pub fn from_benchmark(b: &'a BenchmarkFn) -> Self {
        BlackBox::new(b.d, move |x| b.eval(x).expect("dimension checked at construction"))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
}

/// Identity of one trace in a larger experiment.
#[derive(Debug, Clone, Default)]
pub struct TraceMeta {
    pub function_id: u64,
    pub seed: u64,
    pub optimizer: String,
}

/// Per-step record of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based unrolled step index.
    pub step: usize,
    pub x: Vec<f64>,
    /// Raw response, or the frozen previous value on an infeasible proposal.
    pub y: f64,
    /// Value fed to the response channel (normalized at inference).
    pub y_input: f64,
    pub penalty: f64,
    pub penalty_input: f64,
    pub feasible: bool,
    /// Running max of responses over feasible steps only; `-inf` before the
    /// first feasible evaluation.
    pub best_so_far: f64,
}

/// Complete record of one optimization run.
#[derive(Debug, Clone)]
pub struct RolloutTrace {
    pub meta: TraceMeta,
    /// Query budget `T`.
    pub horizon: usize,
    pub steps: Vec<StepRecord>,
    /// Black-box evaluations performed (== feasible proposals).
    pub evaluations: usize,
    /// Set when a non-finite network output forced a clamped proposal.
    pub clamped: bool,
}

impl RolloutTrace {
    pub fn steps_unrolled(&self) -> usize {
        self.steps.len()
    }

    pub fn feasible_count(&self) -> usize {
        self.steps.iter().filter(|s| s.feasible).count()
    }

    /// Best response so far per feasible query, padded with the final best
    /// to exactly `horizon` entries. Empty when no proposal was feasible.
    pub fn best_curve(&self) -> Vec<f64> {
        let mut curve: Vec<f64> =
            self.steps.iter().filter(|s| s.feasible).map(|s| s.best_so_far).collect();
        if curve.is_empty() {
            return curve;
        }
        curve.truncate(self.horizon);
        while curve.len() < self.horizon {
            curve.push(*curve.last().expect("non-empty"));
        }
        curve
    }

    pub fn final_best(&self) -> Option<f64> {
        self.best_curve().last().copied()
    }
}

/// Regret per reported step: `max(0, y_opt - best_t)`. Clipped at zero
/// because an estimated optimum can be exceeded. Empty when the trace found
/// no feasible query.
pub fn regret_curve(trace: &RolloutTrace, y_opt: f64) -> Vec<f64> {
    trace.best_curve().iter().map(|&b| (y_opt - b).max(0.0)).collect()
}

/// Runs a trained optimizer unconstrained: exactly `horizon` evaluations.
pub fn optimize<R: Rng>(
    ckpt: &Checkpoint,
    bb: &BlackBox,
    horizon: usize,
    rng: &mut R,
    opts: InferOptions,
    meta: TraceMeta,
) -> Result<RolloutTrace, InferError> {
    run_unconstrained(&ckpt.params, bb, horizon, ckpt.config.epsilon, opts, rng, meta)
}

/// Lower-level entry used by both [`optimize`] and the training-time
/// validation loop.
pub fn run_unconstrained<R: Rng>(
    params: &NetParams,
    bb: &BlackBox,
    horizon: usize,
    epsilon: f64,
    opts: InferOptions,
    rng: &mut R,
    meta: TraceMeta,
) -> Result<RolloutTrace, InferError> {
    assert!(horizon >= 1);
    if params.d != bb.dim() {
        return Err(InferError::DimensionMismatch { ckpt: params.d, bb: bb.dim() });
    }
    let d = params.d;
    let mut g = Graph::new();
    let net = params.mount(&mut g, false);
    let mut state = NetState::zeros(&mut g, params.m);
    let mut ns_y = NormState::new(epsilon);
    let mut ns_p = NormState::new(epsilon);

    let mut trace = RolloutTrace {
        meta,
        horizon,
        steps: Vec::with_capacity(horizon),
        evaluations: 0,
        clamped: false,
    };
    let mut x = rngutil::uniform_vec(rng, d, INIT_LO, INIT_HI);
    let mut best = f64::NEG_INFINITY;

    for t in 1..=horizon {
        let y = bb.eval(&x);
        trace.evaluations += 1;
        if !y.is_finite() {
            return Err(InferError::NonFiniteResponse { step: t });
        }
        let y_input = if opts.normalize { ns_y.update(y) } else { y };
        // The penalty channel of a constraint-trained checkpoint reads a
        // normalized all-zero penalty stream when run unconstrained.
        let p_input = if params.with_penalty_channel { ns_p.update(0.0) } else { 0.0 };
        best = best.max(y);
        trace.steps.push(StepRecord {
            step: t,
            x: x.clone(),
            y,
            y_input,
            penalty: 0.0,
            penalty_input: p_input,
            feasible: true,
            best_so_far: best,
        });
        if t == horizon {
            break;
        }

        let x_node = g.constant_vec(x.clone());
        let y_node = g.constant_scalar(y_input);
        let p_node =
            if params.with_penalty_channel { Some(g.constant_scalar(p_input)) } else { None };
        let (next_state, dist) = network::step(&mut g, &net, &state, x_node, y_node, p_node)?;
        state = next_state;
        x = propose(&g, &dist, opts.mode, rng, &x, &mut trace.clamped);
    }
    Ok(trace)
}

/// Runs a trained optimizer under constraints: up to [`UNROLL_FACTOR`]` * T`
/// proposal steps, freezing the response channel on infeasible proposals
/// (the evaluator is never queried there) and stopping after `T` feasible
/// queries.
#[allow(clippy::too_many_arguments)]
pub fn optimize_dc<R: Rng>(
    ckpt: &Checkpoint,
    bb: &BlackBox,
    constraints: &ConstraintSet,
    horizon: usize,
    rng: &mut R,
    variant: Variant,
    mode: QueryMode,
    meta: TraceMeta,
) -> Result<RolloutTrace, InferError> {
    assert!(horizon >= 1);
    let params = &ckpt.params;
    if params.d != bb.dim() {
        return Err(InferError::DimensionMismatch { ckpt: params.d, bb: bb.dim() });
    }
    match variant {
        Variant::RnnOptDc => {
            if !params.with_penalty_channel {
                return Err(InferError::PenaltyChannel { expected: "with" });
            }
        }
        Variant::RnnOptP => {
            if params.with_penalty_channel {
                return Err(InferError::PenaltyChannel { expected: "without" });
            }
        }
        other => return Err(InferError::VariantNotConstrained(other.name())),
    }

    let d = params.d;
    let max_steps = UNROLL_FACTOR * horizon;
    let mut g = Graph::new();
    let net = params.mount(&mut g, false);
    let mut state = NetState::zeros(&mut g, params.m);
    let mut ns_y = NormState::new(ckpt.config.epsilon);
    let mut ns_p = NormState::new(ckpt.config.epsilon);

    let mut trace = RolloutTrace {
        meta,
        horizon,
        steps: Vec::new(),
        evaluations: 0,
        clamped: false,
    };
    let mut x = rngutil::uniform_vec(rng, d, INIT_LO, INIT_HI);
    let mut best = f64::NEG_INFINITY;
    let mut prev_y = 0.0; // response stand-in when the very first proposal violates
    let mut feasible_count = 0;

    for t in 1..=max_steps {
        let penalty = constraints.penalty(&x);
        let feasible = penalty == 0.0;
        let y = if feasible {
            let y = bb.eval(&x);
            trace.evaluations += 1;
            if !y.is_finite() {
                return Err(InferError::NonFiniteResponse { step: t });
            }
            feasible_count += 1;
            best = best.max(y);
            y
        } else {
            prev_y
        };
        prev_y = y;
        let y_input = ns_y.update(y);
        let p_input = ns_p.update(penalty);
        trace.steps.push(StepRecord {
            step: t,
            x: x.clone(),
            y,
            y_input,
            penalty,
            penalty_input: p_input,
            feasible,
            best_so_far: best,
        });
        if feasible_count == horizon || t == max_steps {
            break;
        }

        let x_node = g.constant_vec(x.clone());
        let (y_node, p_node) = match variant {
            // Penalty feedback in its own input channel.
            Variant::RnnOptDc => {
                (g.constant_scalar(y_input), Some(g.constant_scalar(p_input)))
            }
            // Penalty folded into the single response channel.
            Variant::RnnOptP => (g.constant_scalar(y_input - p_input), None),
            _ => unreachable!("validated above"),
        };
        let (next_state, dist) = network::step(&mut g, &net, &state, x_node, y_node, p_node)?;
        state = next_state;
        x = propose(&g, &dist, mode, rng, &x, &mut trace.clamped);
    }
    Ok(trace)
}

/// Draws the next proposal; a non-finite head output falls back to the last
/// finite proposal and flags the trace.
fn propose<R: Rng>(
    g: &Graph,
    dist: &network::QueryDistribution,
    mode: QueryMode,
    rng: &mut R,
    last: &[f64],
    clamped: &mut bool,
) -> Vec<f64> {
    let d = last.len();
    let noise = match mode {
        QueryMode::Sample => rngutil::normal_vec(rng, d),
        QueryMode::Mean => vec![0.0; d],
    };
    let mean = g.values(dist.mean);
    let scale = g.values(dist.scale);
    let x: Vec<f64> =
        (0..d).map(|j| mean[j] + scale[j] * noise[j]).collect();
    if x.iter().all(|v| v.is_finite()) {
        x
    } else {
        *clamped = true;
        last.to_vec()
    }
}
