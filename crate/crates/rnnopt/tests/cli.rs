//! End-to-end coverage of the command-line surface: subcommands, config
//! files, exit codes (0 success, 2 configuration, 3 runtime), and the
//! file formats they produce.

use std::path::PathBuf;

use rnnopt::harness::cli;

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("rnnopt-cli-test").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_command_and_flags_exit_2() {
    assert_eq!(cli::run(&args(&["frobnicate"])), 2);
    assert_eq!(cli::run(&args(&["train", "--bogus", "1"])), 2);
    assert_eq!(cli::run(&args(&[])), 2);
}

#[test]
fn missing_and_invalid_configs_exit_2() {
    let dir = tmp_dir("bad-config");
    assert_eq!(cli::run(&args(&["train", "--config", "/nonexistent", "--out", "x"])), 2);

    let bad = dir.join("bad.conf");
    std::fs::write(&bad, "variant = rnn_opt\nd = 2\nnot_a_key = 1\n").unwrap();
    assert_eq!(
        cli::run(&args(&["train", "--config", bad.to_str().unwrap(), "--out", "x"])),
        2
    );
}

#[test]
fn gen_functions_then_evaluate_pipeline() {
    let dir = tmp_dir("pipeline");
    let manifest = dir.join("suite.manifest");
    assert_eq!(
        cli::run(&args(&[
            "gen-functions",
            "--profile",
            "d2",
            "--count",
            "6",
            "--seed",
            "3",
            "--out",
            manifest.to_str().unwrap(),
        ])),
        0
    );
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("gmm ")).count(), 6);

    let out = dir.join("random.csv");
    let conf = dir.join("eval.conf");
    std::fs::write(
        &conf,
        format!(
            "suite = gmm_d2\noptimizers = random_search\nt = 5\nrepetitions = 6\nseed = 1\n\
             functions = {}\noutput = {}\n",
            manifest.display(),
            out.display()
        ),
    )
    .unwrap();
    assert_eq!(cli::run(&args(&["evaluate", "--config", conf.to_str().unwrap()])), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * 5);

    let table = dir.join("table.csv");
    assert_eq!(
        cli::run(&args(&[
            "compare",
            "--out",
            table.to_str().unwrap(),
            out.to_str().unwrap(),
        ])),
        0
    );
    let merged = std::fs::read_to_string(&table).unwrap();
    assert!(merged.starts_with("optimizer,step,mean_regret,count\n"));
    assert_eq!(merged.lines().count(), 1 + 5);
}

#[test]
fn train_writes_a_loadable_checkpoint() {
    let dir = tmp_dir("train");
    let conf = dir.join("train.conf");
    std::fs::write(
        &conf,
        "variant = rnn_opt_basic\nd = 2\nt = 4\nunits = 4\nbatch_size = 2\niterations = 1\n\
         eval_interval = 1\nvalidation_size = 2\nseed = 5\n",
    )
    .unwrap();
    let ckpt = dir.join("model.ckpt");
    let log = dir.join("progress.log");
    assert_eq!(
        cli::run(&args(&[
            "train",
            "--config",
            conf.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ])),
        0
    );
    let loaded = rnnopt::harness::checkpoint::load_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded.config.units, 4);
    // Progress log: iteration, train loss, validation regret.
    let progress = std::fs::read_to_string(&log).unwrap();
    let first = progress.lines().next().unwrap();
    assert_eq!(first.split('\t').count(), 3);

    // iterations = 0 stores the initialization verbatim.
    std::fs::write(
        &conf,
        "variant = rnn_opt_basic\nd = 2\nt = 4\nunits = 4\nbatch_size = 2\niterations = 0\n\
         eval_interval = 1\nvalidation_size = 2\nseed = 5\n",
    )
    .unwrap();
    let ckpt0 = dir.join("init.ckpt");
    assert_eq!(
        cli::run(&args(&[
            "train",
            "--config",
            conf.to_str().unwrap(),
            "--out",
            ckpt0.to_str().unwrap(),
        ])),
        0
    );
    let init = rnnopt::harness::checkpoint::load_checkpoint(&ckpt0).unwrap();
    assert_eq!(init.iteration, 0);
    let reference = {
        use rnnopt::network::NetParams;
        use rnnopt::rng::{stream, tag};
        let mut rng = stream(5, &[tag::PARAM_INIT]);
        NetParams::init(2, 4, false, &mut rng)
    };
    assert_eq!(init.params, reference);
}

#[test]
fn select_model_picks_a_candidate() {
    let dir = tmp_dir("select");
    let conf = dir.join("train.conf");
    std::fs::write(
        &conf,
        "variant = rnn_opt_basic\nd = 2\nt = 4\nunits = 4\nbatch_size = 2\niterations = 1\n\
         eval_interval = 1\nvalidation_size = 2\nseed = 5\n",
    )
    .unwrap();
    let ckpt = dir.join("best.ckpt");
    assert_eq!(
        cli::run(&args(&[
            "select-model",
            "--config",
            conf.to_str().unwrap(),
            "--units",
            "3,4",
            "--out",
            ckpt.to_str().unwrap(),
        ])),
        0
    );
    let best = rnnopt::harness::checkpoint::load_checkpoint(&ckpt).unwrap();
    assert!(best.config.units == 3 || best.config.units == 4);
}

#[test]
fn validate_yopt_and_gradcheck_run() {
    assert_eq!(
        cli::run(&args(&["validate-yopt", "--functions", "5", "--grid-points", "2000"])),
        0
    );
    assert_eq!(
        cli::run(&args(&["gradcheck", "--configs", "2", "--units", "4", "--horizon", "3"])),
        0
    );
}

#[test]
fn corrupt_checkpoint_is_a_runtime_failure() {
    let dir = tmp_dir("corrupt");
    let ckpt = dir.join("truncated.ckpt");
    std::fs::write(&ckpt, b"RNNOPT1\narrays 8\n").unwrap();
    let out = dir.join("never.csv");
    let conf = dir.join("eval.conf");
    std::fs::write(
        &conf,
        format!(
            "suite = spherical\nd = 2\noptimizers = ckpt:{}\nt = 4\nrepetitions = 1\n\
             output = {}\n",
            ckpt.display(),
            out.display()
        ),
    )
    .unwrap();
    assert_eq!(cli::run(&args(&["evaluate", "--config", conf.to_str().unwrap()])), 3);
    assert!(!out.exists());
}
