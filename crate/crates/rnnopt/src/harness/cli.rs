//! Command-line entry points. Exit codes: 0 success, 2 usage/configuration
//! errors, 3 runtime failures.

use std::path::PathBuf;

use crate::metatrain::{self, TrainConfig};
use crate::synthfn::GmmProfile;

use super::{checkpoint, config, csv, manifest, ExperimentSpec};

const USAGE: &str = "\
usage: rnnopt <command> [options]

commands:
  gen-functions --profile <d2|d6> --count <n> --seed <s> --out <path>
      Sample a reproducible synthetic function suite and write its manifest.
  train --config <path> --out <ckpt> [--log <path>]
      Train one optimizer variant from a config file.
  select-model --config <path> --units <a,b,...> --out <ckpt> [--log <path>]
      Train one candidate per unit count, keep the best validation regret.
  evaluate --config <path>
      Run an experiment spec; writes the CSV named by its `output` key.
  compare --out <path> <csv>...
      Merge run CSVs into a mean-regret-per-step table.
  gradcheck [--configs <n>] [--units <m>] [--horizon <t>] [--step <h>]
      Compare rollout gradients against finite differences.
  validate-yopt --functions <n> --grid-points <m> [--profile <d2|d6>] [--seed <s>]
      Estimate the optimum-estimation error against the grid-search oracle.
";

const EXIT_OK: i32 = 0;
const EXIT_CONFIG: i32 = 2;
const EXIT_RUNTIME: i32 = 3;

/// Parsed `--flag value` options plus positional arguments.
struct Flags {
    values: Vec<(String, String)>,
    positional: Vec<String>,
}

impl Flags {
    fn parse(args: &[String], allowed: &[&str]) -> Result<Self, String> {
        let mut values = Vec::new();
        let mut positional = Vec::new();
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            if let Some(name) = arg.strip_prefix("--") {
                if !allowed.contains(&name) {
                    return Err(format!("unknown flag --{name}"));
                }
                let value = it.next().ok_or_else(|| format!("flag --{name} expects a value"))?;
                values.push((name.to_string(), value.clone()));
            } else {
                positional.push(arg.clone());
            }
        }
        Ok(Flags { values, positional })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.values.iter().rev().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> Result<&str, String> {
        self.get(name).ok_or_else(|| format!("missing required flag --{name}"))
    }

    fn parse_or<T: std::str::FromStr>(&self, name: &str, default: T) -> Result<T, String> {
        match self.get(name) {
            Some(v) => v.parse().map_err(|_| format!("flag --{name}: invalid value `{v}`")),
            None => Ok(default),
        }
    }
}

pub fn run(args: &[String]) -> i32 {
    let Some((command, rest)) = args.split_first() else {
        eprint!("{USAGE}");
        return EXIT_CONFIG;
    };
    let result = match command.as_str() {
        "gen-functions" => gen_functions(rest),
        "train" => train(rest),
        "select-model" => select_model(rest),
        "evaluate" => evaluate(rest),
        "compare" => compare(rest),
        "gradcheck" => gradcheck(rest),
        "validate-yopt" => validate_yopt(rest),
        "--help" | "help" => {
            print!("{USAGE}");
            return EXIT_OK;
        }
        other => {
            eprintln!("unknown command `{other}`\n{USAGE}");
            return EXIT_CONFIG;
        }
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<String> for CliError {
    fn from(msg: String) -> Self {
        CliError::Usage(msg)
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn profile_flag(flags: &Flags) -> Result<GmmProfile, CliError> {
    let name = flags.get("profile").unwrap_or("d2");
    GmmProfile::by_name(name)
        .ok_or_else(|| CliError::Usage(format!("unknown profile `{name}` (expected d2 or d6)")))
}

fn gen_functions(args: &[String]) -> Result<i32, CliError> {
    let flags = Flags::parse(args, &["profile", "count", "seed", "out"])?;
    let profile = profile_flag(&flags)?;
    let count: usize = flags.parse_or("count", 1280)?;
    let seed: u64 = flags.parse_or("seed", 0)?;
    let out = PathBuf::from(flags.require("out")?);
    let suite = manifest::sample_suite(&profile, count, seed);
    std::fs::write(&out, manifest::write_manifest(&suite, seed)).map_err(runtime)?;
    println!("wrote {count} functions to {}", out.display());
    Ok(EXIT_OK)
}

fn load_train_config(flags: &Flags) -> Result<TrainConfig, CliError> {
    let path = flags.require("config")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    config::train_config_from_text(&text).map_err(|e| CliError::Usage(e.to_string()))
}

fn open_log(flags: &Flags) -> Result<Option<std::fs::File>, CliError> {
    match flags.get("log") {
        Some(path) => std::fs::File::create(path).map(Some).map_err(runtime),
        None => Ok(None),
    }
}

fn train(args: &[String]) -> Result<i32, CliError> {
    let flags = Flags::parse(args, &["config", "out", "log"])?;
    let cfg = load_train_config(&flags)?;
    let out = PathBuf::from(flags.require("out")?);
    let mut log = open_log(&flags)?;
    let ckpt = metatrain::train(&cfg, log.as_mut().map(|f| f as &mut dyn std::io::Write))
        .map_err(runtime)?;
    checkpoint::save_checkpoint(&out, &ckpt).map_err(runtime)?;
    println!(
        "trained {} for {} iterations; best at iteration {} with validation regret {}",
        cfg.variant.name(),
        cfg.iterations,
        ckpt.iteration,
        ckpt.validation_regret
    );
    Ok(EXIT_OK)
}

fn select_model(args: &[String]) -> Result<i32, CliError> {
    let flags = Flags::parse(args, &["config", "units", "out", "log"])?;
    let base = load_train_config(&flags)?;
    let units: Vec<usize> = flags
        .require("units")?
        .split(',')
        .map(|u| u.trim().parse().map_err(|_| format!("invalid unit count `{u}`")))
        .collect::<Result<_, _>>()?;
    if units.is_empty() {
        return Err(CliError::Usage("--units needs at least one candidate".to_string()));
    }
    let out = PathBuf::from(flags.require("out")?);
    let configs: Vec<TrainConfig> = units.iter().map(|&m| base.clone().with_units(m)).collect();
    let mut log = open_log(&flags)?;
    let best =
        metatrain::select_model(&configs, log.as_mut().map(|f| f as &mut dyn std::io::Write))
            .map_err(runtime)?;
    checkpoint::save_checkpoint(&out, &best).map_err(runtime)?;
    println!(
        "selected units {} with validation regret {}",
        best.config.units, best.validation_regret
    );
    Ok(EXIT_OK)
}

fn evaluate(args: &[String]) -> Result<i32, CliError> {
    let flags = Flags::parse(args, &["config"])?;
    let path = flags.require("config")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let spec = ExperimentSpec::from_text(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    super::run_experiment(&spec).map_err(runtime)?;
    println!("wrote {}", spec.output.display());
    Ok(EXIT_OK)
}

fn compare(args: &[String]) -> Result<i32, CliError> {
    let flags = Flags::parse(args, &["out"])?;
    let out = PathBuf::from(flags.require("out")?);
    if flags.positional.is_empty() {
        return Err(CliError::Usage("compare needs at least one CSV file".to_string()));
    }
    let inputs: Vec<String> = flags
        .positional
        .iter()
        .map(|p| std::fs::read_to_string(p).map_err(|e| format!("cannot read {p}: {e}")))
        .collect::<Result<_, _>>()?;
    let table = csv::compare_csv(&inputs).map_err(runtime)?;
    std::fs::write(&out, table).map_err(runtime)?;
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}

fn gradcheck(args: &[String]) -> Result<i32, CliError> {
    let flags = Flags::parse(args, &["configs", "units", "horizon", "step"])?;
    let configs: usize = flags.parse_or("configs", 20)?;
    let units: usize = flags.parse_or("units", 8)?;
    let horizon: usize = flags.parse_or("horizon", 5)?;
    let h: f64 = flags.parse_or("step", 3e-4)?;
    let errors = metatrain::gradient_check_study(configs, 2, units, horizon, h).map_err(runtime)?;
    let worst = errors.iter().cloned().fold(0.0f64, f64::max);
    for (k, err) in errors.iter().enumerate() {
        println!("config {k}: max relative error {err:e}");
    }
    println!("worst over {configs} configurations: {worst:e}");
    if worst < 1e-4 {
        Ok(EXIT_OK)
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: worst relative error {worst:e} >= 1e-4"
        )))
    }
}

fn validate_yopt(args: &[String]) -> Result<i32, CliError> {
    let flags = Flags::parse(args, &["functions", "grid-points", "profile", "seed"])?;
    let functions: usize = flags.parse_or("functions", 200)?;
    let grid_points: usize = flags.parse_or("grid-points", 200_000)?;
    let seed: u64 = flags.parse_or("seed", 0)?;
    let profile = profile_flag(&flags)?;
    let (mean, sd) = super::yopt_study(&profile, functions, grid_points, seed);
    println!(
        "optimum estimation error over {functions} functions ({grid_points}-point grid): \
         mean {mean:.5}, sd {sd:.5}"
    );
    Ok(EXIT_OK)
}
