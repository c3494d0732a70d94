//! Drive a trained optimizer against an arbitrary black-box function.
//!
//! The black box is any `Fn(&[f64]) -> f64` to maximize; the optimizer sees
//! only query/response pairs, never gradients or the optimum. Here we train
//! a small model on synthetic objectives, then point it at a function it
//! has never seen.
//!
//!     cargo run --release --example optimize_black_box

use rnnopt::inference::{optimize, BlackBox, InferOptions, TraceMeta};
use rnnopt::metatrain::{train, TrainConfig, Variant};
use rnnopt::rng::{stream, tag};

fn main() {
    let mut cfg = TrainConfig::new(Variant::RnnOpt, 2)
        .with_units(16)
        .with_batch_size(16)
        .with_horizon(20)
        .with_iterations(200)
        .with_seed(7);
    cfg.eval_interval = 25;
    cfg.validation_size = 32;
    println!("training a small optimizer first ({} iterations)...", cfg.iterations);
    let ckpt = train(&cfg, None).expect("training run");

    // An opaque objective: a tilted, shifted bump. Maximum value 1 at (1.5, -0.5).
    let objective =
        |x: &[f64]| (-((x[0] - 1.5).powi(2) + (x[1] + 0.5).powi(2)) / 0.8).exp();
    let bb = BlackBox::new(2, objective);

    let budget = 20;
    let mut rng = stream(123, &[tag::EVAL_TRACE, 0, 0]);
    let trace = optimize(
        &ckpt,
        &bb,
        budget,
        &mut rng,
        InferOptions::default(),
        TraceMeta { function_id: 0, seed: 123, optimizer: "rnn_opt".to_string() },
    )
    .expect("rollout");

    println!("step  x                    y         best-so-far");
    for s in &trace.steps {
        println!("{:>4}  ({:+.3}, {:+.3})     {:+.4}   {:+.4}", s.step, s.x[0], s.x[1], s.y, s.best_so_far);
    }
    println!(
        "{} evaluations; best value {:.4} (true maximum 1.0)",
        trace.evaluations,
        trace.final_best().unwrap()
    );
}
