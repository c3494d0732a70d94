//! Train a recurrent optimizer on synthetic objectives and save the
//! checkpoint.
//!
//! The configuration below is sized for a coffee-break run. Scale `units`,
//! `batch_size`, and `iterations` up for a serious model; the progress log
//! prints `iteration <tab> train loss <tab> validation regret` lines.
//!
//!     cargo run --release --example train_optimizer

use rnnopt::harness::checkpoint::save_checkpoint;
use rnnopt::metatrain::{train, TrainConfig, Variant};

fn main() {
    let mut cfg = TrainConfig::new(Variant::RnnOpt, 2)
        .with_units(16)
        .with_batch_size(16)
        .with_horizon(20)
        .with_iterations(200)
        .with_seed(7);
    cfg.eval_interval = 25;
    cfg.validation_size = 32;

    println!("training {} (d={}, {} units, {} iterations)...", cfg.variant.name(), cfg.d, cfg.units, cfg.iterations);
    let mut log = std::io::stdout();
    let ckpt = train(&cfg, Some(&mut log)).expect("training run");
    println!(
        "best checkpoint from iteration {} with validation regret {:.5}",
        ckpt.iteration, ckpt.validation_regret
    );

    let path = std::env::temp_dir().join("rnnopt_example.ckpt");
    save_checkpoint(&path, &ckpt).expect("write checkpoint");
    println!("saved to {}", path.display());
}
