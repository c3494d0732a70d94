//! The full scripted pipeline through config files: generate a function
//! suite, train from a config, evaluate against baselines, and merge the
//! results — the same steps the `rnnopt` binary exposes as subcommands.
//!
//!     cargo run --release --example experiment_pipeline

use rnnopt::harness::checkpoint::save_checkpoint;
use rnnopt::harness::config::train_config_from_text;
use rnnopt::harness::csv::compare_csv;
use rnnopt::harness::{run_experiment, ExperimentSpec};
use rnnopt::metatrain::train;

fn main() {
    let dir = std::env::temp_dir().join("rnnopt_pipeline");
    std::fs::create_dir_all(&dir).expect("temp dir");

    // 1. Train from a flat key = value config.
    let train_text = "\
variant = rnn_opt
d = 2
t = 20
units = 16
batch_size = 16
iterations = 150
eval_interval = 25
validation_size = 32
seed = 11
";
    let cfg = train_config_from_text(train_text).expect("valid config");
    println!("training {} from config...", cfg.variant.name());
    let ckpt = train(&cfg, None).expect("training run");
    let ckpt_path = dir.join("pipeline.ckpt");
    save_checkpoint(&ckpt_path, &ckpt).expect("save checkpoint");

    // 2. Evaluate the checkpoint and two baselines on a benchmark suite.
    let out_path = dir.join("spherical.csv");
    let eval_text = format!(
        "suite = spherical
d = 2
optimizers = ckpt:{}, cma_es, random_search
t = 20
repetitions = 32
seed = 5
output = {}
",
        ckpt_path.display(),
        out_path.display()
    );
    let spec = ExperimentSpec::from_text(&eval_text).expect("valid experiment");
    run_experiment(&spec).expect("experiment runs");
    println!("per-step results in {}", out_path.display());

    // 3. Merge into a mean-regret table.
    let table = compare_csv(&[std::fs::read_to_string(&out_path).expect("csv")])
        .expect("comparable runs");
    let summary_path = dir.join("summary.csv");
    std::fs::write(&summary_path, &table).expect("write summary");
    println!("mean regret at the final step ({}):\n", summary_path.display());
    for line in table.lines() {
        let final_step = line.split(',').nth(1) == Some("20");
        if line.starts_with("optimizer") || final_step {
            println!("  {line}");
        }
    }
}
