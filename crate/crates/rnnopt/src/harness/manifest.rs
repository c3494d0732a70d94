//! Textual function-suite manifests: one record per synthetic objective so
//! training/validation/test suites are reproducible artifacts. Floats are
//! written in Rust's shortest round-trip form, so parsing restores them
//! exactly.

use thiserror::Error;

use crate::rng::{stream, tag};
use crate::synthfn::{sample_gmm, GmmDf, GmmProfile};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {what}")]
    Malformed { line: usize, what: String },
}

/// Samples a reproducible suite: function `k` comes from its own stream
/// derived from `(master_seed, k)`.
pub fn sample_suite(profile: &GmmProfile, count: usize, master_seed: u64) -> Vec<GmmDf> {
    (0..count)
        .map(|k| {
            let mut rng = stream(master_seed, &[tag::SUITE_FN, k as u64]);
            sample_gmm(&mut rng, profile)
        })
        .collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn join_nested(rows: &[Vec<f64>]) -> String {
    rows.iter().map(|r| join(r)).collect::<Vec<_>>().join(";")
}

pub fn write_manifest(suite: &[GmmDf], master_seed: u64) -> String {
    let mut out = format!("# gmm function suite; count={} seed={}\n", suite.len(), master_seed);
    for (k, f) in suite.iter().enumerate() {
        out.push_str(&format!(
            "gmm id={} d={} halfwidth={} yopt={} weights={} means={} covs={}\n",
            k,
            f.d,
            f.domain_halfwidth,
            f.y_opt_est,
            join(&f.weights),
            join_nested(&f.means),
            join_nested(&f.diag_cov),
        ));
    }
    out
}

fn parse_floats(line: usize, text: &str) -> Result<Vec<f64>, ManifestError> {
    text.split(',')
        .map(|v| {
            v.parse().map_err(|_| ManifestError::Malformed {
                line,
                what: format!("bad float `{v}`"),
            })
        })
        .collect()
}

fn parse_nested(line: usize, text: &str) -> Result<Vec<Vec<f64>>, ManifestError> {
    text.split(';').map(|row| parse_floats(line, row)).collect()
}

pub fn parse_manifest(text: &str) -> Result<Vec<GmmDf>, ManifestError> {
    let mut suite = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rest = line.strip_prefix("gmm ").ok_or_else(|| ManifestError::Malformed {
            line: line_no,
            what: format!("expected a `gmm` record, got `{line}`"),
        })?;
        let mut halfwidth = None;
        let mut yopt = None;
        let mut weights = None;
        let mut means = None;
        let mut covs = None;
        for field in rest.split(' ') {
            let (key, value) = field.split_once('=').ok_or_else(|| ManifestError::Malformed {
                line: line_no,
                what: format!("expected key=value, got `{field}`"),
            })?;
            match key {
                "id" | "d" => {}
                "halfwidth" => halfwidth = Some(parse_floats(line_no, value)?[0]),
                "yopt" => yopt = Some(parse_floats(line_no, value)?[0]),
                "weights" => weights = Some(parse_floats(line_no, value)?),
                "means" => means = Some(parse_nested(line_no, value)?),
                "covs" => covs = Some(parse_nested(line_no, value)?),
                other => {
                    return Err(ManifestError::Malformed {
                        line: line_no,
                        what: format!("unknown field `{other}`"),
                    })
                }
            }
        }
        let (Some(halfwidth), Some(yopt), Some(weights), Some(means), Some(covs)) =
            (halfwidth, yopt, weights, means, covs)
        else {
            return Err(ManifestError::Malformed {
                line: line_no,
                what: "missing fields in gmm record".to_string(),
            });
        };
        let f = GmmDf::new(weights, means, covs, halfwidth).map_err(|e| {
            ManifestError::Malformed { line: line_no, what: e.to_string() }
        })?;
        // The recomputed estimate must agree with the recorded one; floats
        // round-trip exactly through the shortest form.
        if f.y_opt_est.to_bits() != yopt.to_bits() {
            return Err(ManifestError::Malformed {
                line: line_no,
                what: format!("recorded yopt {} disagrees with recomputed {}", yopt, f.y_opt_est),
            });
        }
        suite.push(f);
    }
    Ok(suite)
}
