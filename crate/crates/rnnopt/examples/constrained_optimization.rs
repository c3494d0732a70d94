//! Optimize under domain constraints with the penalty-channel variant.
//!
//! The evaluator is only ever queried at feasible points: infeasible
//! proposals freeze the response channel and feed the constraint-violation
//! penalty back to the network instead. The run may unroll up to five times
//! the budget in proposal steps; only feasible queries count.
//!
//!     cargo run --release --example constrained_optimization

use rnnopt::inference::{optimize_dc, BlackBox, QueryMode, TraceMeta};
use rnnopt::metatrain::{train, TrainConfig, Variant};
use rnnopt::rng::{stream, tag};
use rnnopt::synthfn::{sample_gmm, sample_box_constraints, GmmProfile};

fn main() {
    let mut cfg = TrainConfig::new(Variant::RnnOptDc, 2)
        .with_units(24)
        .with_batch_size(64)
        .with_horizon(20)
        .with_iterations(400)
        .with_seed(7);
    cfg.eval_interval = 50;
    cfg.validation_size = 32;
    println!("training the penalty-channel variant ({} iterations)...", cfg.iterations);
    let ckpt = train(&cfg, None).expect("training run");

    // A fresh objective with box limits drawn around its estimated optimum,
    // so the optimum stays feasible while the feasible region varies.
    let mut f_rng = stream(100, &[tag::SUITE_FN, 0]);
    let objective = sample_gmm(&mut f_rng, &GmmProfile::d2());
    let mut c_rng = stream(100, &[tag::EVAL_CONSTRAINT, 0]);
    let constraints = sample_box_constraints(objective.x_opt_est(), 1.0, 2.0, &mut c_rng);
    println!("constraints: {constraints:?}");

    let bb = BlackBox::from_gmm(&objective);
    let mut rng = stream(100, &[tag::EVAL_TRACE, 0, 0]);
    let trace = optimize_dc(
        &ckpt,
        &bb,
        &constraints,
        20,
        &mut rng,
        Variant::RnnOptDc,
        QueryMode::Sample,
        TraceMeta::default(),
    )
    .expect("constrained rollout");

    println!("\nstep  feasible  penalty   y         best");
    for s in &trace.steps {
        println!(
            "{:>4}  {:<8}  {:7.3}  {:+.4}   {}",
            s.step,
            s.feasible,
            s.penalty,
            s.y,
            if s.best_so_far.is_finite() { format!("{:+.4}", s.best_so_far) } else { "-".to_string() },
        );
    }
    println!(
        "\n{} of {} proposals feasible; {} evaluations within a budget of 20; final regret {:.4}",
        trace.feasible_count(),
        trace.steps_unrolled(),
        trace.evaluations,
        (objective.y_opt_est - trace.final_best().unwrap_or(f64::NEG_INFINITY)).max(0.0),
    );
}
