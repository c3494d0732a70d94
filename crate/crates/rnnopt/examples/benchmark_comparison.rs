//! Compare a trained optimizer against the classical baselines on a
//! benchmark function under the same query budget.
//!
//! Every method gets the same budget and the same pool of random starting
//! points; the table reports mean regret (distance to the known maximum)
//! at a few budget milestones, averaged over repetitions.
//!
//!     cargo run --release --example benchmark_comparison

use rnnopt::baselines::{cma_es, nelder_mead, random_search};
use rnnopt::inference::{self, BlackBox, InferOptions, TraceMeta};
use rnnopt::metatrain::{train, TrainConfig, Variant};
use rnnopt::rng::{stream, tag, uniform_vec};
use rnnopt::synthfn::{BenchmarkFn, BenchmarkKind};

const BUDGET: usize = 20;
const REPETITIONS: u64 = 64;

fn main() {
    let mut cfg = TrainConfig::new(Variant::RnnOpt, 2)
        .with_units(16)
        .with_batch_size(32)
        .with_horizon(BUDGET)
        .with_iterations(400)
        .with_seed(7);
    cfg.eval_interval = 50;
    cfg.validation_size = 32;
    println!("training a small optimizer first ({} iterations)...", cfg.iterations);
    let ckpt = train(&cfg, None).expect("training run");

    let benchmark = BenchmarkFn::new(BenchmarkKind::Rastrigin, 2).unwrap();
    let bb = BlackBox::from_benchmark(&benchmark);
    println!("benchmark: {} d={}, budget {BUDGET}, {REPETITIONS} repetitions\n", benchmark.kind.name(), benchmark.d);

    // Mean best-so-far curves per method.
    let mut curves: Vec<(&str, Vec<f64>)> = Vec::new();
    let mut trained = vec![0.0; BUDGET];
    let mut nm = vec![0.0; BUDGET];
    let mut cma = vec![0.0; BUDGET];
    let mut rs = vec![0.0; BUDGET];
    for rep in 0..REPETITIONS {
        let mut rng = stream(5, &[tag::EVAL_TRACE, 0, rep]);
        let trace = inference::optimize(
            &ckpt,
            &bb,
            BUDGET,
            &mut rng,
            InferOptions::default(),
            TraceMeta::default(),
        )
        .expect("rollout");
        for (acc, r) in trained.iter_mut().zip(inference::regret_curve(&trace, benchmark.y_opt())) {
            *acc += r;
        }

        let mut rng = stream(5, &[tag::EVAL_TRACE, 1, rep]);
        let x0 = uniform_vec(&mut rng, 2, -4.0, 4.0);
        for (acc, out) in [
            (&mut nm, nelder_mead(&bb, &x0, BUDGET)),
            (&mut cma, cma_es(&bb, &x0, BUDGET, &mut rng)),
            (&mut rs, random_search(&bb, (-4.0, 4.0), BUDGET, &mut rng)),
        ] {
            for (a, best) in acc.iter_mut().zip(&out.curve) {
                *a += (benchmark.y_opt() - best).max(0.0);
            }
        }
    }
    curves.push(("rnn_opt", trained));
    curves.push(("nelder_mead", nm));
    curves.push(("cma_es", cma));
    curves.push(("random_search", rs));

    println!("{:<14} {:>9} {:>9} {:>9} {:>9}", "mean regret", "t=5", "t=10", "t=15", "t=20");
    for (name, totals) in &curves {
        let at = |t: usize| totals[t - 1] / REPETITIONS as f64;
        println!("{:<14} {:>9.3} {:>9.3} {:>9.3} {:>9.3}", name, at(5), at(10), at(15), at(20));
    }
}
