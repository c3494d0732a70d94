//! CSV export of optimization runs and the mean-regret comparison table.
//!
//! One row per (run, reported step). Floats use Rust's shortest round-trip
//! form, so identical runs produce byte-identical files. Trained-optimizer
//! traces and baseline runs share the schema.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::baselines::SearchOutcome;
use crate::inference::{RolloutTrace, TraceMeta};

pub const CSV_HEADER: &str = "function_id,seed,optimizer,step,y_best,regret,feasible,steps_unrolled";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("runs disagree on the horizon: {0} vs {1}")]
    MixedHorizons(usize, usize),
    #[error("line {line}: {what}")]
    Malformed { line: usize, what: String },
}

/// One exportable run: the best-so-far curve over reported steps plus the
/// bookkeeping columns. An empty curve is the "no solution" marker.
#[derive(Debug, Clone)]
pub struct CurveRecord {
    pub meta: TraceMeta,
    pub horizon: usize,
    /// Best value after each reported step; padded to `horizon` entries or
    /// empty when the run produced no feasible evaluation.
    pub best: Vec<f64>,
    /// Number of reported steps backed by a real feasible evaluation (the
    /// rest are padding).
    pub feasible_reported: usize,
    pub steps_unrolled: usize,
}

impl CurveRecord {
    pub fn from_trace(trace: &RolloutTrace) -> Self {
        CurveRecord {
            meta: trace.meta.clone(),
            horizon: trace.horizon,
            best: trace.best_curve(),
            feasible_reported: trace.feasible_count().min(trace.horizon),
            steps_unrolled: trace.steps_unrolled(),
        }
    }

    pub fn from_outcome(meta: TraceMeta, budget: usize, outcome: &SearchOutcome) -> Self {
        CurveRecord {
            meta,
            horizon: budget,
            best: outcome.curve.clone(),
            feasible_reported: outcome.evaluations.min(budget),
            steps_unrolled: outcome.evaluations,
        }
    }
}

/// Serializes runs with their (optional) known optima.
pub fn export_csv(records: &[(CurveRecord, Option<f64>)]) -> Result<String, CsvError> {
    if let Some(((first, _), rest)) = records.split_first() {
        for (r, _) in rest {
            if r.horizon != first.horizon {
                return Err(CsvError::MixedHorizons(first.horizon, r.horizon));
            }
        }
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (record, y_opt) in records {
        for step in 1..=record.horizon {
            let (best_cell, regret_cell) = match record.best.get(step - 1) {
                Some(&best) => {
                    let regret = y_opt.map(|y| (y - best).max(0.0));
                    (best.to_string(), regret.map(|r| r.to_string()).unwrap_or_default())
                }
                None => (String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                record.meta.function_id,
                record.meta.seed,
                record.meta.optimizer,
                step,
                best_cell,
                regret_cell,
                step <= record.feasible_reported,
                record.steps_unrolled,
            ));
        }
    }
    Ok(out)
}

/// Merges exported CSVs into a mean-regret-per-step table
/// (`optimizer,step,mean_regret,count`), skipping rows without a regret.
pub fn compare_csv(inputs: &[String]) -> Result<String, CsvError> {
    let mut groups: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for text in inputs {
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                if line != CSV_HEADER {
                    return Err(CsvError::Malformed {
                        line: 1,
                        what: format!("unexpected header `{line}`"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(CsvError::Malformed {
                    line: idx + 1,
                    what: format!("expected 8 fields, got {}", fields.len()),
                });
            }
            if fields[5].is_empty() {
                continue;
            }
            let step: usize = fields[3].parse().map_err(|_| CsvError::Malformed {
                line: idx + 1,
                what: format!("bad step `{}`", fields[3]),
            })?;
            let regret: f64 = fields[5].parse().map_err(|_| CsvError::Malformed {
                line: idx + 1,
                what: format!("bad regret `{}`", fields[5]),
            })?;
            let entry = groups.entry((fields[2].to_string(), step)).or_insert((0.0, 0));
            entry.0 += regret;
            entry.1 += 1;
        }
    }
    let mut out = String::from("optimizer,step,mean_regret,count\n");
    for ((optimizer, step), (total, count)) in groups {
        out.push_str(&format!("{},{},{},{}\n", optimizer, step, total / count as f64, count));
    }
    Ok(out)
}
