//! Meta-training: differentiable rollouts over sampled objectives, Adam
//! updates, validation-based model selection, and the trained-variant
//! matrix.
//!
//! Each training rollout unrolls the full horizon inside one autodiff
//! graph: the objective is evaluated as a graph fragment so the
//! reparameterized query samples carry gradients from the loss back into
//! the network parameters. Variants differ only in loss, discount,
//! input conditioning, and the penalty channel.

use std::io::Write;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AdError, Graph, NodeId};
use crate::inference::{self, BlackBox, InferOptions, RolloutTrace, StepRecord, TraceMeta};
use crate::losses::{self, LossError, NormState};
use crate::network::{self, NetError, NetNodes, NetParams, NetState};
use crate::rng::{self as rngutil, stream, tag};
use crate::synthfn::{sample_box_constraints, sample_gmm, ConstraintSet, GmmDf, GmmProfile, SynthError};

/// Gradient updates are clipped to this global norm.
pub const GRAD_CLIP: f64 = 5.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("non-finite loss contribution at rollout step {step}")]
    NonFinite { step: usize },
    #[error("domain-constraint training requires a differentiable (box or disk) constraint set")]
    NonDifferentiableConstraint,
    #[error("rollout step {step}: {source}")]
    Net {
        step: usize,
        #[source]
        source: NetError,
    },
    #[error(transparent)]
    Graph(#[from] AdError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("iteration {iteration}, rollout {rollout}: {source}")]
    Rollout {
        iteration: usize,
        rollout: usize,
        #[source]
        source: RolloutError,
    },
    #[error("training diverged at iteration {iteration}: non-finite parameters")]
    Diverged { iteration: usize },
    #[error(transparent)]
    Graph(#[from] AdError),
    #[error("progress log: {0}")]
    Log(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Variants
// ---------------------------------------------------------------------------

/// The trained-optimizer matrix. Each variant fixes the loss, the default
/// discount, whether responses are normalized during training, and whether
/// the network carries a penalty input channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Observed-improvement objective, raw responses during training.
    RnnOi,
    /// Regret objective, raw responses during training.
    RnnOptBasic,
    /// Regret objective with incremental normalization during training.
    RnnOpt,
    /// Regret plus domain-constraint objective, penalty input channel.
    RnnOptDc,
    /// Inference-only: a plain regret-trained checkpoint driven with
    /// penalty-adjusted inputs under constraints. Rejected for training.
    RnnOptP,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::RnnOi => "rnn_oi",
            Variant::RnnOptBasic => "rnn_opt_basic",
            Variant::RnnOpt => "rnn_opt",
            Variant::RnnOptDc => "rnn_opt_dc",
            Variant::RnnOptP => "rnn_opt_p",
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "rnn_oi" => Some(Variant::RnnOi),
            "rnn_opt_basic" => Some(Variant::RnnOptBasic),
            "rnn_opt" => Some(Variant::RnnOpt),
            "rnn_opt_dc" => Some(Variant::RnnOptDc),
            "rnn_opt_p" => Some(Variant::RnnOptP),
            _ => None,
        }
    }

    pub fn default_gamma(self) -> f64 {
        match self {
            Variant::RnnOi => 1.0,
            _ => 0.98,
        }
    }

    /// Whether responses are normalized before entering the network during
    /// training (at inference normalization is always on).
    pub fn normalize_in_training(self) -> bool {
        matches!(self, Variant::RnnOpt | Variant::RnnOptDc)
    }

    pub fn penalty_channel(self) -> bool {
        matches!(self, Variant::RnnOptDc)
    }

    pub fn trainable(self) -> bool {
        !matches!(self, Variant::RnnOptP)
    }
}

// ---------------------------------------------------------------------------
// Configuration and checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub d: usize,
    /// Rollout horizon `T`.
    pub horizon: usize,
    pub gamma: f64,
    pub lambda: f64,
    /// Normalization stabilizer.
    pub epsilon: f64,
    /// LSTM units per layer.
    pub units: usize,
    /// Stacked LSTM layers; fixed at 2.
    pub layers: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub profile: GmmProfile,
    /// Box half-width range `(tau1, tau2)` for constraint sampling when
    /// training the penalty-channel variant.
    pub dc_tau: (f64, f64),
    pub eval_interval: usize,
    pub validation_size: usize,
}

impl TrainConfig {
    pub fn new(variant: Variant, d: usize) -> Self {
        let profile = match d {
            2 => GmmProfile::d2(),
            6 => GmmProfile::d6(),
            _ => GmmProfile { d, ..GmmProfile::d2() },
        };
        TrainConfig {
            variant,
            d,
            horizon: 10 * d,
            gamma: variant.default_gamma(),
            lambda: 0.2,
            epsilon: 0.05,
            units: 32,
            layers: network::LSTM_LAYERS,
            batch_size: 32,
            iterations: 1500,
            learning_rate: 0.005,
            seed: 0,
            profile,
            dc_tau: (1.0, 2.0),
            eval_interval: 50,
            validation_size: 128,
        }
    }

    pub fn with_units(mut self, units: usize) -> Self {
        self.units = units;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn penalty_channel(&self) -> bool {
        self.variant.penalty_channel()
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if !self.variant.trainable() {
            return fail(format!("variant {} is inference-only", self.variant.name()));
        }
        if self.horizon < 2 {
            return fail(format!("horizon must be at least 2, got {}", self.horizon));
        }
        if self.layers != network::LSTM_LAYERS {
            return fail(format!("layers is fixed at {}, got {}", network::LSTM_LAYERS, self.layers));
        }
        if self.d != self.profile.d {
            return fail(format!("dimension {} does not match profile dimension {}", self.d, self.profile.d));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if self.lambda < 0.0 {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.epsilon <= 0.0 {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.units == 0 || self.batch_size == 0 {
            return fail("units and batch_size must be positive".to_string());
        }
        if self.learning_rate <= 0.0 {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be positive".to_string());
        }
        if self.variant.penalty_channel() && !(self.dc_tau.0 > 0.0 && self.dc_tau.1 >= self.dc_tau.0) {
            return fail(format!("constraint range must satisfy 0 < tau1 <= tau2, got {:?}", self.dc_tau));
        }
        Ok(())
    }
}

/// A trained-parameter snapshot with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetParams,
    pub config: TrainConfig,
    /// Iteration the snapshot was taken at.
    pub iteration: usize,
    /// Mean validation regret at the final step when the snapshot was taken.
    pub validation_regret: f64,
    pub rng_description: String,
}

// ---------------------------------------------------------------------------
// Training rollouts
// ---------------------------------------------------------------------------

/// Reassembles parameter nodes (mounted in [`NetParams::flatten`] order,
/// e.g. by a gradient checker) into the network's node-handle structure.
pub fn net_nodes_from_ids(params: &NetParams, ids: &[NodeId]) -> NetNodes {
    assert_eq!(ids.len(), 3 * params.layers.len() + 2);
    let mut layers = Vec::new();
    for l in 0..params.layers.len() {
        layers.push(network::LayerNodes {
            w_x: ids[3 * l],
            w_h: ids[3 * l + 1],
            b: ids[3 * l + 2],
        });
    }
    NetNodes {
        d: params.d,
        m: params.m,
        with_penalty_channel: params.with_penalty_channel,
        layers,
        head_w: ids[ids.len() - 2],
        head_b: ids[ids.len() - 1],
    }
}

/// Stochastic draws of one rollout, pre-generated so a rollout can be
/// replayed deterministically (finite-difference checks rebuild the same
/// graph many times).
#[derive(Debug, Clone)]
pub struct RolloutDraws {
    pub x1: Vec<f64>,
    /// Reparameterization noise for steps `1..T-1`.
    pub noise: Vec<Vec<f64>>,
}

impl RolloutDraws {
    pub fn generate<R: Rng>(rng: &mut R, d: usize, horizon: usize) -> Self {
        let x1 = rngutil::uniform_vec(rng, d, inference::INIT_LO, inference::INIT_HI);
        let noise = (0..horizon - 1).map(|_| rngutil::normal_vec(rng, d)).collect();
        RolloutDraws { x1, noise }
    }
}

/// Builds one differentiable rollout and its training objective.
///
/// Per step: evaluate the objective as a graph fragment (or freeze the
/// response on an infeasible proposal), condition the inputs per variant,
/// step the network, and sample the next query by reparameterization. The
/// returned node is the scalar the optimizer descends on.
pub fn rollout_train<R: Rng>(
    g: &mut Graph,
    net: &NetNodes,
    objective: &GmmDf,
    constraints: Option<&ConstraintSet>,
    cfg: &TrainConfig,
    meta: TraceMeta,
    rng: &mut R,
) -> Result<(RolloutTrace, NodeId), RolloutError> {
    let draws = RolloutDraws::generate(rng, cfg.d, cfg.horizon);
    rollout_with_draws(g, net, objective, constraints, cfg, meta, &draws)
}

/// [`rollout_train`] with the stochastic draws supplied by the caller.
pub fn rollout_with_draws(
    g: &mut Graph,
    net: &NetNodes,
    objective: &GmmDf,
    constraints: Option<&ConstraintSet>,
    cfg: &TrainConfig,
    meta: TraceMeta,
    draws: &RolloutDraws,
) -> Result<(RolloutTrace, NodeId), RolloutError> {
    let horizon = cfg.horizon;
    debug_assert!(horizon >= 2 && draws.noise.len() == horizon - 1);
    let dc = cfg.variant.penalty_channel();
    let constraint_count = constraints.map(ConstraintSet::count).unwrap_or(0);

    let mut trace = RolloutTrace {
        meta,
        horizon,
        steps: Vec::with_capacity(horizon),
        evaluations: 0,
        clamped: false,
    };
    let mut ns_y = NormState::new(cfg.epsilon);
    let mut ns_p = NormState::new(cfg.epsilon);
    let mut state = NetState::zeros(g, cfg.units);
    let mut x_node = g.constant_vec(draws.x1.clone());
    let mut y_nodes: Vec<NodeId> = Vec::with_capacity(horizon);
    let mut p_nodes: Vec<NodeId> = Vec::with_capacity(horizon);
    let mut best = f64::NEG_INFINITY;

    for t in 1..=horizon {
        // Penalty first: an infeasible proposal never evaluates the
        // objective, its response channel replays the previous value.
        let (p_node, p_val) = match (dc, constraints) {
            (true, Some(cs)) => {
                let node = cs
                    .penalty_graph(g, x_node)?
                    .ok_or(RolloutError::NonDifferentiableConstraint)?;
                let val = g.value_scalar(node);
                (Some(node), val)
            }
            (true, None) => return Err(RolloutError::NonDifferentiableConstraint),
            (false, _) => (None, 0.0),
        };
        let feasible = p_val == 0.0;
        let y_node = if feasible {
            trace.evaluations += 1;
            objective.eval_graph(g, x_node)?
        } else if let Some(&prev) = y_nodes.last() {
            g.stop_gradient(prev)
        } else {
            g.constant_scalar(0.0)
        };
        let y_val = g.value_scalar(y_node);
        if !y_val.is_finite() || !p_val.is_finite() {
            return Err(RolloutError::NonFinite { step: t });
        }
        if feasible {
            best = best.max(y_val);
        }
        y_nodes.push(y_node);
        if let Some(p) = p_node {
            p_nodes.push(p);
        }

        // Input conditioning. The normalization statistics are updated with
        // every response but enter the graph as constants, so no gradient
        // flows through them.
        let y_in_val;
        let y_in_node = if cfg.variant.normalize_in_training() {
            y_in_val = ns_y.update(y_val);
            let mean = g.constant_scalar(ns_y.mean());
            let centered = g.sub(y_node, mean)?;
            g.div_scalar(centered, ns_y.scale())
        } else {
            y_in_val = y_val;
            y_node
        };
        let mut p_in_val = 0.0;
        let p_in_node = match p_node {
            Some(p) => {
                p_in_val = ns_p.update(p_val);
                let mean = g.constant_scalar(ns_p.mean());
                let centered = g.sub(p, mean)?;
                Some(g.div_scalar(centered, ns_p.scale()))
            }
            None => None,
        };

        trace.steps.push(StepRecord {
            step: t,
            x: g.values(x_node).to_vec(),
            y: y_val,
            y_input: y_in_val,
            penalty: p_val,
            penalty_input: p_in_val,
            feasible,
            best_so_far: best,
        });
        if t == horizon {
            break;
        }

        let (next_state, dist) = network::step(g, net, &state, x_node, y_in_node, p_in_node)
            .map_err(|source| RolloutError::Net { step: t, source })?;
        state = next_state;
        x_node = network::sample_query(g, &dist, &draws.noise[t - 1])
            .map_err(|source| RolloutError::Net { step: t, source })?;
    }

    let y_seq = g.concat(&y_nodes)?;
    let objective_node = match cfg.variant {
        Variant::RnnOi => {
            // The improvement objective is maximized; descending on its
            // negation trains the network to keep improving.
            let oi = losses::oi_loss_graph(g, y_seq, cfg.gamma)?;
            let minus_one = g.constant_scalar(-1.0);
            g.mul(oi, minus_one)?
        }
        Variant::RnnOptBasic | Variant::RnnOpt => {
            let best_prefix = g.running_max(y_seq)?;
            losses::regret_loss_graph(g, best_prefix, objective.y_opt_est, cfg.gamma)?
        }
        Variant::RnnOptDc => {
            let best_prefix = g.running_max(y_seq)?;
            let regret = losses::regret_loss_graph(g, best_prefix, objective.y_opt_est, cfg.gamma)?;
            let dc = losses::dc_loss_graph(g, &p_nodes, constraint_count)?;
            let lambda = g.constant_scalar(cfg.lambda);
            let weighted = g.mul(dc, lambda)?;
            g.add(regret, weighted)?
        }
        Variant::RnnOptP => unreachable!("rejected by TrainConfig::validate"),
    };
    if !g.value_scalar(objective_node).is_finite() {
        return Err(RolloutError::NonFinite { step: horizon });
    }
    Ok((trace, objective_node))
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: usize,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for k in 0..params.len() {
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * grads[k];
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * grads[k] * grads[k];
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        params[k] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

fn clip_global_norm(grads: &mut [f64], max_norm: f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Mean loss and averaged gradients over one fresh batch of objectives.
/// Rollouts are reduced in batch order, so results are reproducible.
fn batch_step(
    params: &NetParams,
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>), TrainError> {
    let n = params.n_params();
    let mut grad_acc = vec![0.0; n];
    let mut per_fn_losses = Vec::with_capacity(cfg.batch_size);
    for k in 0..cfg.batch_size {
        let mut fn_rng = stream(cfg.seed, &[tag::TRAIN_FN, iteration as u64, k as u64]);
        let objective = sample_gmm(&mut fn_rng, &cfg.profile);
        let constraints = if cfg.variant.penalty_channel() {
            let mut c_rng = stream(cfg.seed, &[tag::TRAIN_CONSTRAINT, iteration as u64, k as u64]);
            Some(sample_box_constraints(objective.x_opt_est(), cfg.dc_tau.0, cfg.dc_tau.1, &mut c_rng))
        } else {
            None
        };
        let mut roll_rng = stream(cfg.seed, &[tag::TRAIN_ROLLOUT, iteration as u64, k as u64]);
        let mut g = Graph::new();
        let net = params.mount(&mut g, true);
        let meta = TraceMeta {
            function_id: k as u64,
            seed: cfg.seed,
            optimizer: cfg.variant.name().to_string(),
        };
        let (_, loss_node) =
            rollout_train(&mut g, &net, &objective, constraints.as_ref(), cfg, meta, &mut roll_rng)
                .map_err(|source| TrainError::Rollout { iteration, rollout: k, source })?;
        g.backward(loss_node)?;
        per_fn_losses.push(g.value_scalar(loss_node));
        for (acc, gk) in grad_acc.iter_mut().zip(net.grads_flat(&g)) {
            *acc += gk;
        }
    }
    let n_fns = cfg.batch_size as f64;
    grad_acc.iter_mut().for_each(|g| *g /= n_fns);
    let mean_loss = per_fn_losses.iter().sum::<f64>() / n_fns;
    Ok((mean_loss, grad_acc, per_fn_losses))
}

/// Mean regret at the final step over a fixed validation suite, evaluated
/// with the inference protocol (normalization always on). The penalty
/// variant is validated in its deployment mode: box constraints sampled
/// around each validation optimum, constrained unrolling, and the padded
/// regret curve.
pub fn validation_regret(params: &NetParams, suite: &[GmmDf], cfg: &TrainConfig) -> f64 {
    let mut total = 0.0;
    for (j, f) in suite.iter().enumerate() {
        let bb = BlackBox::from_gmm(f);
        let mut rng = stream(cfg.seed, &[tag::VALIDATION_ROLLOUT, j as u64]);
        let meta = TraceMeta {
            function_id: j as u64,
            seed: cfg.seed,
            optimizer: cfg.variant.name().to_string(),
        };
        let regret = if cfg.variant.penalty_channel() {
            let mut c_rng = stream(cfg.seed, &[tag::VALIDATION_CONSTRAINT, j as u64]);
            let constraints =
                sample_box_constraints(f.x_opt_est(), cfg.dc_tau.0, cfg.dc_tau.1, &mut c_rng);
            let ckpt = Checkpoint {
                params: params.clone(),
                config: cfg.clone(),
                iteration: 0,
                validation_regret: f64::INFINITY,
                rng_description: String::new(),
            };
            let trace = inference::optimize_dc(
                &ckpt,
                &bb,
                &constraints,
                cfg.horizon,
                &mut rng,
                cfg.variant,
                inference::QueryMode::Sample,
                meta,
            )
            .expect("validation objectives are finite everywhere");
            let curve = inference::regret_curve(&trace, f.y_opt_est);
            // No feasible query in the whole unroll counts as full regret.
            curve.last().copied().unwrap_or_else(|| f.y_opt_est.max(0.0))
        } else {
            let trace = inference::run_unconstrained(
                params,
                &bb,
                cfg.horizon,
                cfg.epsilon,
                InferOptions::default(),
                &mut rng,
                meta,
            )
            .expect("validation objectives are finite everywhere");
            let curve = inference::regret_curve(&trace, f.y_opt_est);
            curve.last().copied().unwrap_or(f64::INFINITY)
        };
        total += regret;
    }
    total / suite.len() as f64
}

/// Samples the fixed validation suite for a configuration.
pub fn validation_suite(cfg: &TrainConfig) -> Vec<GmmDf> {
    (0..cfg.validation_size)
        .map(|j| {
            let mut rng = stream(cfg.seed, &[tag::VALIDATION_FN, j as u64]);
            sample_gmm(&mut rng, &cfg.profile)
        })
        .collect()
}

/// Trains one optimizer: fresh objectives every iteration, averaged
/// gradients, norm clipping, Adam, and periodic validation. Returns the
/// checkpoint with the best validation regret (which may be the
/// initialization).
pub fn train(
    cfg: &TrainConfig,
    mut log: Option<&mut (dyn Write + '_)>,
) -> Result<Checkpoint, TrainError> {
    cfg.validate()?;
    let mut init_rng = stream(cfg.seed, &[tag::PARAM_INIT]);
    let mut params = NetParams::init(cfg.d, cfg.units, cfg.penalty_channel(), &mut init_rng);
    let mut flat = params.flatten();
    let mut adam = AdamState::new(flat.len());
    let suite = validation_suite(cfg);

    let rng_description = format!("chacha8 streams derived from master seed {}", cfg.seed);
    let mut best_regret = validation_regret(&params, &suite, cfg);
    let mut best = Checkpoint {
        params: params.clone(),
        config: cfg.clone(),
        iteration: 0,
        validation_regret: best_regret,
        rng_description: rng_description.clone(),
    };

    let mut window_loss = 0.0;
    let mut window_count = 0usize;
    for iteration in 1..=cfg.iterations {
        let (mean_loss, mut grads, _) = batch_step(&params, cfg, iteration)?;
        clip_global_norm(&mut grads, GRAD_CLIP);
        adam_step(&mut flat, &grads, &mut adam, cfg.learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
        params.assign_flat(&flat);
        if !params.is_finite() {
            return Err(TrainError::Diverged { iteration });
        }
        window_loss += mean_loss;
        window_count += 1;

        if iteration % cfg.eval_interval == 0 || iteration == cfg.iterations {
            let regret = validation_regret(&params, &suite, cfg);
            if let Some(out) = log.as_deref_mut() {
                writeln!(out, "{}\t{}\t{}", iteration, window_loss / window_count as f64, regret)?;
            }
            window_loss = 0.0;
            window_count = 0;
            if regret < best_regret {
                best_regret = regret;
                best = Checkpoint {
                    params: params.clone(),
                    config: cfg.clone(),
                    iteration,
                    validation_regret: regret,
                    rng_description: rng_description.clone(),
                };
            }
        }
    }
    Ok(best)
}

/// Sweeps full-rollout regret-loss gradients against central finite
/// differences over `count` independently seeded configurations and returns
/// each configuration's maximum relative error.
///
/// The sweep uses the unnormalized regret variant: with incremental
/// normalization the running statistics are constants in backward by
/// design, so finite differences of a rebuilt rollout would measure that
/// choice instead of gradient correctness.
pub fn gradient_check_study(
    count: usize,
    d: usize,
    units: usize,
    horizon: usize,
    h: f64,
) -> Result<Vec<f64>, TrainError> {
    let cfg = TrainConfig::new(Variant::RnnOptBasic, d).with_units(units).with_horizon(horizon);
    cfg.validate()?;
    let mut errors = Vec::with_capacity(count);
    for seed in 0..count as u64 {
        let mut f_rng = stream(seed, &[tag::TRAIN_FN, 0, 0]);
        let objective = sample_gmm(&mut f_rng, &cfg.profile);
        let params = {
            let mut rng = stream(seed, &[tag::PARAM_INIT]);
            NetParams::init(cfg.d, cfg.units, false, &mut rng)
        };
        let draws = {
            let mut rng = stream(seed, &[tag::TRAIN_ROLLOUT, 0, 0]);
            RolloutDraws::generate(&mut rng, cfg.d, cfg.horizon)
        };
        let tensors: Vec<crate::autodiff::Tensor> =
            params.arrays().into_iter().map(|(_, t)| t.clone()).collect();
        let max_rel = crate::autodiff::grad_check(
            |g, ids| {
                let net = net_nodes_from_ids(&params, ids);
                let (_, loss) = rollout_with_draws(
                    g,
                    &net,
                    &objective,
                    None,
                    &cfg,
                    TraceMeta::default(),
                    &draws,
                )
                .expect("rollout over a finite objective builds");
                Ok(loss)
            },
            &tensors,
            h,
        )?;
        errors.push(max_rel);
    }
    Ok(errors)
}

/// Trains every candidate configuration (identical up to the unit count)
/// and returns the checkpoint with the lowest validation regret; ties go to
/// the smallest network.
pub fn select_model(
    configs: &[TrainConfig],
    mut log: Option<&mut (dyn Write + '_)>,
) -> Result<Checkpoint, TrainError> {
    if configs.is_empty() {
        return Err(TrainError::InvalidConfig("no candidate configurations".to_string()));
    }
    for cfg in configs {
        let mut reference = cfg.clone();
        reference.units = configs[0].units;
        if reference != configs[0] {
            return Err(TrainError::InvalidConfig(
                "model-selection candidates must differ only in units".to_string(),
            ));
        }
    }
    let mut candidates = Vec::with_capacity(configs.len());
    for cfg in configs {
        let ckpt = train(cfg, log.as_deref_mut())?;
        if let Some(out) = log.as_deref_mut() {
            writeln!(out, "# units {} validation regret {}", cfg.units, ckpt.validation_regret)?;
        }
        candidates.push(ckpt);
    }
    candidates.sort_by(|a, b| {
        a.validation_regret
            .total_cmp(&b.validation_regret)
            .then(a.config.units.cmp(&b.config.units))
    });
    Ok(candidates.into_iter().next().expect("non-empty"))
}
