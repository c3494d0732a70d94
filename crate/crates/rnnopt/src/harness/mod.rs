//! Experiment orchestration, configuration, persistence, and result export.
//!
//! An experiment is fully specified by a flat config file plus a master
//! seed: the same file produces byte-identical CSV output on every run.
//! Synthetic suites pair many functions with one initialization each;
//! benchmark suites pair one function with many initializations.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv;
pub mod manifest;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::baselines;
use crate::inference::{self, BlackBox, InferOptions, QueryMode, TraceMeta};
use crate::metatrain::{Checkpoint, Variant};
use crate::rng::{stream, tag, uniform_vec};
use crate::synthfn::{
    grid_search_yopt, sample_box_constraints, BenchmarkFn, BenchmarkKind, ConstraintSet, GmmDf,
    GmmProfile,
};

use checkpoint::CheckpointError;
use config::{ConfigError, KvReader};
use csv::{CsvError, CurveRecord};
use manifest::ManifestError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("inference failure: {0}")]
    Infer(#[from] inference::InferError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What to optimize.
#[derive(Debug, Clone)]
pub enum Suite {
    /// Synthetic mixture functions: one random function per repetition.
    Gmm(GmmProfile),
    /// A fixed benchmark: one function, many initializations.
    Benchmark(BenchmarkFn),
}

impl Suite {
    pub fn dim(&self) -> usize {
        match self {
            Suite::Gmm(p) => p.d,
            Suite::Benchmark(b) => b.d,
        }
    }
}

/// One entry of the optimizer list.
#[derive(Debug, Clone)]
pub enum OptimizerRef {
    Checkpoint(PathBuf),
    NelderMead,
    CmaEs,
    RandomSearch,
}

/// Constraint setup for the whole experiment. The grids are the standard
/// evaluation matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSetup {
    None,
    /// Box half-width ranges `(tau1, tau2)` sampled around each optimum.
    Box(Vec<(f64, f64)>),
    /// Disk constraints `||x||^2 <= tau * d`.
    Disk(Vec<f64>),
}

pub const BOX_GRID: [(f64, f64); 9] = [
    (0.5, 1.5),
    (0.5, 2.0),
    (0.5, 2.5),
    (1.0, 1.5),
    (1.0, 2.0),
    (1.0, 2.5),
    (1.5, 1.5),
    (1.5, 2.0),
    (1.5, 2.5),
];

pub const DISK_GRID: [f64; 3] = [0.5, 1.0, 2.0];

/// A complete evaluation experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub suite: Suite,
    pub optimizers: Vec<OptimizerRef>,
    /// Query budget; defaults to `10 * d`.
    pub horizon: usize,
    pub repetitions: usize,
    pub constraints: ConstraintSetup,
    pub seed: u64,
    pub output: PathBuf,
    /// Optional pre-generated function manifest for synthetic suites.
    pub functions_manifest: Option<PathBuf>,
    pub query_mode: QueryMode,
    /// Inference normalization; off only for the saturation ablation.
    pub normalize: bool,
}

impl ExperimentSpec {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KvReader::parse(text)?;
        let suite_name = kv.require_str("suite")?;
        let suite = match suite_name.as_str() {
            "gmm_d2" => Suite::Gmm(GmmProfile::d2()),
            "gmm_d6" => Suite::Gmm(GmmProfile::d6()),
            name => match BenchmarkKind::by_name(name) {
                Some(kind) => {
                    let d: usize = if kind == BenchmarkKind::Goldstein {
                        kv.optional("d", "dimension")?.unwrap_or(2)
                    } else {
                        kv.require("d", "dimension")?
                    };
                    let b = BenchmarkFn::new(kind, d)
                        .map_err(|e| ConfigError::Semantic(e.to_string()))?;
                    Suite::Benchmark(b)
                }
                None => {
                    return Err(ConfigError::Invalid {
                        key: "suite".to_string(),
                        value: suite_name,
                        expected: "gmm_d2 | gmm_d6 | goldstein | rosenbrock | rastrigin | spherical"
                            .to_string(),
                    })
                }
            },
        };
        if matches!(suite, Suite::Gmm(_)) {
            // The profile fixes the dimension for synthetic suites.
            let _ = kv.optional_str("d");
        }

        let optimizers_text = kv.require_str("optimizers")?;
        let mut optimizers = Vec::new();
        for entry in optimizers_text.split(',') {
            let entry = entry.trim();
            optimizers.push(match entry {
                "nelder_mead" => OptimizerRef::NelderMead,
                "cma_es" => OptimizerRef::CmaEs,
                "random_search" => OptimizerRef::RandomSearch,
                other => match other.strip_prefix("ckpt:") {
                    Some(path) => OptimizerRef::Checkpoint(PathBuf::from(path)),
                    None => {
                        return Err(ConfigError::Invalid {
                            key: "optimizers".to_string(),
                            value: other.to_string(),
                            expected: "ckpt:<path> | nelder_mead | cma_es | random_search"
                                .to_string(),
                        })
                    }
                },
            });
        }

        let constraints = match kv.optional_str("constraints").as_deref() {
            None | Some("none") => ConstraintSetup::None,
            Some("box_grid") => ConstraintSetup::Box(BOX_GRID.to_vec()),
            Some("disk_grid") => ConstraintSetup::Disk(DISK_GRID.to_vec()),
            Some(text) => {
                let invalid = || ConfigError::Invalid {
                    key: "constraints".to_string(),
                    value: text.to_string(),
                    expected: "none | box <tau1> <tau2> | box_grid | disk <tau> | disk_grid"
                        .to_string(),
                };
                let mut parts = text.split_whitespace();
                match parts.next() {
                    Some("box") => {
                        let tau1: f64 =
                            parts.next().and_then(|v| v.parse().ok()).ok_or_else(invalid)?;
                        let tau2: f64 =
                            parts.next().and_then(|v| v.parse().ok()).ok_or_else(invalid)?;
                        ConstraintSetup::Box(vec![(tau1, tau2)])
                    }
                    Some("disk") => {
                        let tau: f64 =
                            parts.next().and_then(|v| v.parse().ok()).ok_or_else(invalid)?;
                        ConstraintSetup::Disk(vec![tau])
                    }
                    _ => return Err(invalid()),
                }
            }
        };
        if constraints != ConstraintSetup::None
            && optimizers.iter().any(|o| !matches!(o, OptimizerRef::Checkpoint(_)))
        {
            return Err(ConfigError::Semantic(
                "classical baselines only run unconstrained; remove them or the constraints"
                    .to_string(),
            ));
        }

        let horizon = kv.optional("t", "integer >= 2")?.unwrap_or(10 * suite.dim());
        let repetitions = kv.optional("repetitions", "positive integer")?.unwrap_or(1280);
        let seed = kv.optional("seed", "u64")?.unwrap_or(0);
        let output = PathBuf::from(kv.require_str("output")?);
        let functions_manifest = kv.optional_str("functions").map(PathBuf::from);
        let query_mode = match kv.optional_str("query_mode") {
            None => QueryMode::Sample,
            Some(name) => QueryMode::by_name(&name).ok_or_else(|| ConfigError::Invalid {
                key: "query_mode".to_string(),
                value: name,
                expected: "sample | mean".to_string(),
            })?,
        };
        let normalize = kv.optional("normalize", "true | false")?.unwrap_or(true);
        kv.finish()?;

        if horizon < 2 {
            return Err(ConfigError::Semantic(format!("t must be at least 2, got {horizon}")));
        }
        if repetitions < 1 {
            return Err(ConfigError::Semantic("repetitions must be at least 1".to_string()));
        }
        Ok(ExperimentSpec {
            suite,
            optimizers,
            horizon,
            repetitions,
            constraints,
            seed,
            output,
            functions_manifest,
            query_mode,
            normalize,
        })
    }
}

struct LoadedOptimizer {
    name: String,
    kind: LoadedKind,
}

enum LoadedKind {
    Ckpt(Box<Checkpoint>),
    NelderMead,
    CmaEs,
    RandomSearch,
}

fn load_optimizers(spec: &ExperimentSpec) -> Result<Vec<LoadedOptimizer>, HarnessError> {
    let mut out: Vec<LoadedOptimizer> = Vec::new();
    for opt in &spec.optimizers {
        let (base, kind) = match opt {
            OptimizerRef::Checkpoint(path) => {
                let ckpt = checkpoint::load_checkpoint(path)?;
                (ckpt.config.variant.name().to_string(), LoadedKind::Ckpt(Box::new(ckpt)))
            }
            OptimizerRef::NelderMead => ("nelder_mead".to_string(), LoadedKind::NelderMead),
            OptimizerRef::CmaEs => ("cma_es".to_string(), LoadedKind::CmaEs),
            OptimizerRef::RandomSearch => ("random_search".to_string(), LoadedKind::RandomSearch),
        };
        // Duplicate names get an index suffix so CSV rows stay attributable.
        let mut name = base.clone();
        let mut k = 2;
        while out.iter().any(|o| o.name == name) {
            name = format!("{base}#{k}");
            k += 1;
        }
        out.push(LoadedOptimizer { name, kind });
    }
    Ok(out)
}

/// The functions of a synthetic suite (empty for benchmark suites).
fn suite_functions(spec: &ExperimentSpec) -> Result<Vec<GmmDf>, HarnessError> {
    match &spec.suite {
        Suite::Gmm(profile) => match &spec.functions_manifest {
            Some(path) => Ok(manifest::parse_manifest(&std::fs::read_to_string(path)?)?),
            None => Ok(manifest::sample_suite(profile, spec.repetitions, spec.seed)),
        },
        Suite::Benchmark(_) => Ok(Vec::new()),
    }
}

/// Runs the full experiment and returns the CSV text (also written to the
/// spec's output path together with a `.meta` sidecar).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<String, HarnessError> {
    let optimizers = load_optimizers(spec)?;
    let gmm_suite = suite_functions(spec)?;

    // (function, repetition) pairs per the reporting protocol.
    let pairs: Vec<(u64, u64)> = match &spec.suite {
        Suite::Gmm(_) => (0..gmm_suite.len() as u64).map(|fid| (fid, 0)).collect(),
        Suite::Benchmark(_) => (0..spec.repetitions as u64).map(|rep| (0, rep)).collect(),
    };

    let constraint_grid: Vec<Option<(String, GridPoint)>> = match &spec.constraints {
        ConstraintSetup::None => vec![None],
        ConstraintSetup::Box(pairs) => pairs
            .iter()
            .map(|&(t1, t2)| Some((format!("box {t1} {t2}"), GridPoint::Box(t1, t2))))
            .collect(),
        ConstraintSetup::Disk(taus) => taus
            .iter()
            .map(|&tau| Some((format!("disk {tau}"), GridPoint::Disk(tau))))
            .collect(),
    };

    let mut records: Vec<(CurveRecord, Option<f64>)> = Vec::new();
    for optimizer in &optimizers {
        for grid in &constraint_grid {
            let label = match grid {
                None => optimizer.name.clone(),
                Some((suffix, _)) => format!("{}[{}]", optimizer.name, suffix),
            };
            for &(fid, rep) in &pairs {
                let record = run_one(spec, optimizer, &label, grid, &gmm_suite, fid, rep)?;
                records.push(record);
            }
        }
    }

    let text = csv::export_csv(&records)?;
    std::fs::write(&spec.output, &text)?;
    std::fs::write(meta_path(&spec.output), meta_text(spec, &optimizers))?;
    Ok(text)
}

#[derive(Debug, Clone, Copy)]
enum GridPoint {
    Box(f64, f64),
    Disk(f64),
}

fn run_one(
    spec: &ExperimentSpec,
    optimizer: &LoadedOptimizer,
    label: &str,
    grid: &Option<(String, GridPoint)>,
    gmm_suite: &[GmmDf],
    fid: u64,
    rep: u64,
) -> Result<(CurveRecord, Option<f64>), HarnessError> {
    let (bb, y_opt, x_opt): (BlackBox, f64, Vec<f64>) = match &spec.suite {
        Suite::Gmm(_) => {
            let f = &gmm_suite[fid as usize];
            (BlackBox::from_gmm(f), f.y_opt_est, f.x_opt_est().to_vec())
        }
        Suite::Benchmark(b) => (BlackBox::from_benchmark(b), b.y_opt(), b.x_opt()),
    };
    let meta = TraceMeta { function_id: fid, seed: spec.seed, optimizer: label.to_string() };
    let mut rng = stream(spec.seed, &[tag::EVAL_TRACE, fid, rep]);

    let record = match &optimizer.kind {
        LoadedKind::Ckpt(ckpt) => {
            let trace = match grid {
                None => inference::optimize(
                    ckpt,
                    &bb,
                    spec.horizon,
                    &mut rng,
                    InferOptions { mode: spec.query_mode, normalize: spec.normalize },
                    meta,
                )?,
                Some((_, point)) => {
                    let constraints = match point {
                        GridPoint::Box(t1, t2) => {
                            let mut c_rng = stream(spec.seed, &[tag::EVAL_CONSTRAINT, fid, rep]);
                            sample_box_constraints(&x_opt, *t1, *t2, &mut c_rng)
                        }
                        GridPoint::Disk(tau) => ConstraintSet::Disk { tau: *tau, d: bb.dim() },
                    };
                    let variant = if ckpt.params.with_penalty_channel {
                        Variant::RnnOptDc
                    } else {
                        Variant::RnnOptP
                    };
                    inference::optimize_dc(
                        ckpt,
                        &bb,
                        &constraints,
                        spec.horizon,
                        &mut rng,
                        variant,
                        spec.query_mode,
                        meta,
                    )?
                }
            };
            CurveRecord::from_trace(&trace)
        }
        LoadedKind::NelderMead => {
            let x0 = uniform_vec(&mut rng, bb.dim(), inference::INIT_LO, inference::INIT_HI);
            let outcome = baselines::nelder_mead(&bb, &x0, spec.horizon);
            CurveRecord::from_outcome(meta, spec.horizon, &outcome)
        }
        LoadedKind::CmaEs => {
            let x0 = uniform_vec(&mut rng, bb.dim(), inference::INIT_LO, inference::INIT_HI);
            let outcome = baselines::cma_es(&bb, &x0, spec.horizon, &mut rng);
            CurveRecord::from_outcome(meta, spec.horizon, &outcome)
        }
        LoadedKind::RandomSearch => {
            let outcome = baselines::random_search(
                &bb,
                (inference::INIT_LO, inference::INIT_HI),
                spec.horizon,
                &mut rng,
            );
            CurveRecord::from_outcome(meta, spec.horizon, &outcome)
        }
    };
    Ok((record, Some(y_opt)))
}

pub fn meta_path(output: &Path) -> PathBuf {
    let mut p = output.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

/// Sidecar describing exactly what produced the CSV, including the pinned
/// baseline hyperparameters.
fn meta_text(spec: &ExperimentSpec, optimizers: &[LoadedOptimizer]) -> String {
    let mut out = String::new();
    let suite = match &spec.suite {
        Suite::Gmm(p) => format!("gmm d={} halfwidth={} cov={}", p.d, p.mean_halfwidth, p.cov_mean),
        Suite::Benchmark(b) => format!("{} d={}", b.kind.name(), b.d),
    };
    out.push_str(&format!("suite = {suite}\n"));
    out.push_str(&format!("t = {}\n", spec.horizon));
    out.push_str(&format!("repetitions = {}\n", spec.repetitions));
    out.push_str(&format!("seed = {}\n", spec.seed));
    out.push_str(&format!("constraints = {:?}\n", spec.constraints));
    out.push_str(&format!("query_mode = {:?}\n", spec.query_mode));
    out.push_str(&format!("normalize = {}\n", spec.normalize));
    for opt in optimizers {
        match &opt.kind {
            LoadedKind::Ckpt(ckpt) => out.push_str(&format!(
                "optimizer {} = checkpoint variant={} units={} iteration={} validation_regret={}\n",
                opt.name,
                ckpt.config.variant.name(),
                ckpt.config.units,
                ckpt.iteration,
                ckpt.validation_regret,
            )),
            LoadedKind::NelderMead => out.push_str(&format!(
                "optimizer {} = nelder_mead reflection=1 expansion=2 contraction=0.5 shrink=0.5 init_step=0.5\n",
                opt.name
            )),
            LoadedKind::CmaEs => out.push_str(&format!(
                "optimizer {} = cma_es population=4+floor(3 ln d) sigma0=1\n",
                opt.name
            )),
            LoadedKind::RandomSearch => out.push_str(&format!(
                "optimizer {} = random_search domain=[{}, {}]\n",
                opt.name,
                inference::INIT_LO,
                inference::INIT_HI
            )),
        }
    }
    out
}

/// Reproduces the optimum-estimation study: samples functions, runs the
/// grid-search oracle on each, and reports the mean and standard deviation
/// of the absolute estimation error.
pub fn yopt_study(
    profile: &GmmProfile,
    functions: usize,
    grid_points: usize,
    master_seed: u64,
) -> (f64, f64) {
    assert!(functions >= 1);
    let mut errors = Vec::with_capacity(functions);
    for k in 0..functions as u64 {
        let mut f_rng = stream(master_seed, &[tag::SUITE_FN, k]);
        let f = crate::synthfn::sample_gmm(&mut f_rng, profile);
        let mut g_rng = stream(master_seed, &[tag::GRID_SEARCH, k]);
        let found = grid_search_yopt(&f, grid_points, &mut g_rng);
        errors.push((found - f.y_opt_est).abs());
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / errors.len() as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metatrain::{train, TrainConfig};

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("rnnopt-harness-test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn tiny_ckpt(variant: Variant, path: &Path) {
        let mut cfg = TrainConfig::new(variant, 2)
            .with_units(5)
            .with_batch_size(2)
            .with_horizon(4)
            .with_iterations(0);
        cfg.eval_interval = 1;
        cfg.validation_size = 2;
        let ckpt = train(&cfg, None).unwrap();
        checkpoint::save_checkpoint(path, &ckpt).unwrap();
    }

    #[test]
    fn experiment_spec_parses_and_validates() {
        let text = "suite = spherical\nd = 2\noptimizers = nelder_mead, cma_es\n\
                    t = 10\nrepetitions = 3\nseed = 5\noutput = /tmp/out.csv\n";
        let spec = ExperimentSpec::from_text(text).unwrap();
        assert_eq!(spec.horizon, 10);
        assert_eq!(spec.repetitions, 3);
        assert!(matches!(spec.suite, Suite::Benchmark(_)));

        let bad = "suite = spherical\nd = 2\noptimizers = nelder_mead\noutput = x\n\
                   constraints = disk 0.5\n";
        assert!(ExperimentSpec::from_text(bad).is_err());

        let unknown = "suite = spherical\nd = 2\noptimizers = nelder_mead\noutput = x\nfoo = 1\n";
        assert!(matches!(ExperimentSpec::from_text(unknown), Err(ConfigError::UnknownKeys(_))));
    }

    #[test]
    fn benchmark_experiment_produces_exact_row_count() {
        let out = tmp("bench.csv");
        let text = format!(
            "suite = spherical\nd = 2\noptimizers = random_search, nelder_mead\n\
             t = 6\nrepetitions = 4\nseed = 3\noutput = {}\n",
            out.display()
        );
        let spec = ExperimentSpec::from_text(&text).unwrap();
        let csv_text = run_experiment(&spec).unwrap();
        // 2 optimizers x 4 repetitions x 6 steps + header.
        assert_eq!(csv_text.lines().count(), 1 + 2 * 4 * 6);
        assert!(meta_path(&out).exists());
    }

    #[test]
    fn experiments_are_byte_reproducible() {
        let out = tmp("repro.csv");
        let text = format!(
            "suite = gmm_d2\noptimizers = random_search\nt = 5\nrepetitions = 6\n\
             seed = 9\noutput = {}\n",
            out.display()
        );
        let spec = ExperimentSpec::from_text(&text).unwrap();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read_to_string(&out).unwrap(), a);
    }

    #[test]
    fn checkpoint_and_constraints_round_through_the_harness() {
        let ckpt_path = tmp("dc.ckpt");
        tiny_ckpt(Variant::RnnOptDc, &ckpt_path);
        let out = tmp("dc.csv");
        let text = format!(
            "suite = gmm_d2\noptimizers = ckpt:{}\nt = 4\nrepetitions = 3\nseed = 2\n\
             constraints = box 1.0 2.0\noutput = {}\n",
            ckpt_path.display(),
            out.display()
        );
        let spec = ExperimentSpec::from_text(&text).unwrap();
        let csv_text = run_experiment(&spec).unwrap();
        assert_eq!(csv_text.lines().count(), 1 + 3 * 4);
        assert!(csv_text.contains("rnn_opt_dc[box 1 2]"));
    }

    #[test]
    fn gmm_manifest_feeds_the_experiment() {
        let suite = manifest::sample_suite(&GmmProfile::d2(), 3, 17);
        let manifest_path = tmp("suite.manifest");
        std::fs::write(&manifest_path, manifest::write_manifest(&suite, 17)).unwrap();
        let out = tmp("manifest.csv");
        let text = format!(
            "suite = gmm_d2\noptimizers = random_search\nt = 4\nrepetitions = 3\nseed = 1\n\
             functions = {}\noutput = {}\n",
            manifest_path.display(),
            out.display()
        );
        let spec = ExperimentSpec::from_text(&text).unwrap();
        let csv_text = run_experiment(&spec).unwrap();
        assert_eq!(csv_text.lines().count(), 1 + 3 * 4);
    }

    #[test]
    fn yopt_study_runs() {
        let (mean, sd) = yopt_study(&GmmProfile::d2(), 10, 2000, 21);
        assert!(mean >= 0.0 && sd >= 0.0);
        assert!(mean.is_finite() && sd.is_finite());
    }
}
