//! Trainable recurrent optimizers for black-box optimization under strict
//! query budgets.
//!
//! The crate covers the full pipeline: synthetic training objectives built
//! from signed Gaussian-mixture densities, a tape-based reverse-mode
//! autodiff engine, a stacked-LSTM optimizer network with a stochastic
//! Gaussian query head, discounted-regret meta-training (with optional
//! domain-constraint penalties), a deployment runtime that drives a trained
//! optimizer against any black-box evaluator, and classical derivative-free
//! baselines (CMA-ES, Nelder-Mead, random search) under identical budget
//! accounting.
//!
//! Start with the `examples/` directory: each example is a runnable
//! walkthrough of one capability (training, evaluation, constrained
//! optimization, gradient checking, baseline comparison). The `rnnopt`
//! binary exposes the same machinery as subcommands for scripted runs.

pub mod autodiff;
pub mod baselines;
pub mod harness;
pub mod inference;
pub mod losses;
pub mod metatrain;
pub mod network;
pub mod rng;
pub mod synthfn;

pub use autodiff::{grad_check, AdError, Graph, NodeId, Tensor};
pub use inference::{BlackBox, InferOptions, QueryMode, RolloutTrace};
pub use metatrain::{Checkpoint, TrainConfig, Variant};
pub use synthfn::{BenchmarkFn, BenchmarkKind, ConstraintSet, GmmDf, GmmProfile};
