//! Flat `key = value` configuration files. Unknown keys are hard errors so
//! a typo can never silently fall back to a default.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::metatrain::{TrainConfig, Variant};
use crate::synthfn::GmmProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("duplicate key `{0}`")]
    Duplicate(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: invalid value `{value}` ({expected})")]
    Invalid { key: String, value: String, expected: String },
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("{0}")]
    Semantic(String),
}

/// Parsed key/value file with consumption tracking: every key must be read
/// by the time [`KvReader::finish`] runs.
pub struct KvReader {
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
}

impl KvReader {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed { line: idx + 1, text: raw.to_string() });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if values.insert(key.clone(), value).is_some() {
                return Err(ConfigError::Duplicate(key));
            }
        }
        Ok(KvReader { values, used: BTreeSet::new() })
    }

    pub fn optional_str(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.values.get(key).cloned()
    }

    pub fn require_str(&mut self, key: &str) -> Result<String, ConfigError> {
        self.optional_str(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn parse_as<T: std::str::FromStr>(
        key: &str,
        value: &str,
        expected: &str,
    ) -> Result<T, ConfigError> {
        value.parse().map_err(|_| ConfigError::Invalid {
            key: key.to_string(),
            value: value.to_string(),
            expected: expected.to_string(),
        })
    }

    pub fn optional<T: std::str::FromStr>(
        &mut self,
        key: &str,
        expected: &str,
    ) -> Result<Option<T>, ConfigError> {
        match self.optional_str(key) {
            Some(v) => Ok(Some(Self::parse_as(key, &v, expected)?)),
            None => Ok(None),
        }
    }

    pub fn require<T: std::str::FromStr>(
        &mut self,
        key: &str,
        expected: &str,
    ) -> Result<T, ConfigError> {
        let v = self.require_str(key)?;
        Self::parse_as(key, &v, expected)
    }

    /// Fails if the file contained keys nobody asked for.
    pub fn finish(self) -> Result<(), ConfigError> {
        let unknown: Vec<String> =
            self.values.keys().filter(|k| !self.used.contains(*k)).cloned().collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::UnknownKeys(unknown))
        }
    }
}

/// Builds a [`TrainConfig`] from a config file.
pub fn train_config_from_text(text: &str) -> Result<TrainConfig, ConfigError> {
    let mut kv = KvReader::parse(text)?;
    let variant_name = kv.require_str("variant")?;
    let variant = Variant::by_name(&variant_name).ok_or_else(|| ConfigError::Invalid {
        key: "variant".to_string(),
        value: variant_name,
        expected: "rnn_oi | rnn_opt_basic | rnn_opt | rnn_opt_dc".to_string(),
    })?;
    let d: usize = kv.require("d", "positive integer")?;
    let mut cfg = TrainConfig::new(variant, d);

    if let Some(profile) = kv.optional_str("profile") {
        cfg.profile = GmmProfile::by_name(&profile).ok_or_else(|| ConfigError::Invalid {
            key: "profile".to_string(),
            value: profile,
            expected: "d2 | d6".to_string(),
        })?;
    }
    if let Some(t) = kv.optional("t", "integer >= 2")? {
        cfg.horizon = t;
    }
    if let Some(gamma) = kv.optional("gamma", "float in (0, 1]")? {
        cfg.gamma = gamma;
    }
    if let Some(lambda) = kv.optional("lambda", "non-negative float")? {
        cfg.lambda = lambda;
    }
    if let Some(epsilon) = kv.optional("epsilon", "positive float")? {
        cfg.epsilon = epsilon;
    }
    if let Some(units) = kv.optional("units", "positive integer")? {
        cfg.units = units;
    }
    if let Some(layers) = kv.optional("layers", "integer (fixed at 2)")? {
        cfg.layers = layers;
    }
    if let Some(batch) = kv.optional("batch_size", "positive integer")? {
        cfg.batch_size = batch;
    }
    if let Some(iterations) = kv.optional("iterations", "non-negative integer")? {
        cfg.iterations = iterations;
    }
    if let Some(lr) = kv.optional("learning_rate", "positive float")? {
        cfg.learning_rate = lr;
    }
    if let Some(seed) = kv.optional("seed", "u64")? {
        cfg.seed = seed;
    }
    if let Some(tau1) = kv.optional("dc_tau1", "positive float")? {
        cfg.dc_tau.0 = tau1;
    }
    if let Some(tau2) = kv.optional("dc_tau2", "positive float")? {
        cfg.dc_tau.1 = tau2;
    }
    if let Some(interval) = kv.optional("eval_interval", "positive integer")? {
        cfg.eval_interval = interval;
    }
    if let Some(size) = kv.optional("validation_size", "positive integer")? {
        cfg.validation_size = size;
    }
    kv.finish()?;
    cfg.validate().map_err(|e| ConfigError::Semantic(e.to_string()))?;
    Ok(cfg)
}

/// Serializes a [`TrainConfig`] as `key = value` lines (the checkpoint
/// trailer format). `train_config_from_text` parses it back exactly.
pub fn train_config_to_text(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("variant", cfg.variant.name().to_string());
    push("d", cfg.d.to_string());
    push("t", cfg.horizon.to_string());
    push("gamma", cfg.gamma.to_string());
    push("lambda", cfg.lambda.to_string());
    push("epsilon", cfg.epsilon.to_string());
    push("units", cfg.units.to_string());
    push("layers", cfg.layers.to_string());
    push("batch_size", cfg.batch_size.to_string());
    push("iterations", cfg.iterations.to_string());
    push("learning_rate", cfg.learning_rate.to_string());
    push("seed", cfg.seed.to_string());
    push("dc_tau1", cfg.dc_tau.0.to_string());
    push("dc_tau2", cfg.dc_tau.1.to_string());
    push("eval_interval", cfg.eval_interval.to_string());
    push("validation_size", cfg.validation_size.to_string());
    if cfg.profile == GmmProfile::d2() {
        push("profile", "d2".to_string());
    } else if cfg.profile == GmmProfile::d6() {
        push("profile", "d6".to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_train_config() {
        let cfg = train_config_from_text("variant = rnn_opt\nd = 2\n").unwrap();
        assert_eq!(cfg.variant, Variant::RnnOpt);
        assert_eq!(cfg.d, 2);
        assert_eq!(cfg.horizon, 20);
        assert_eq!(cfg.gamma, 0.98);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = train_config_from_text("variant = rnn_opt\nd = 2\nbatchsize = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKeys(ref keys) if keys == &["batchsize"]));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# optimizer\nvariant = rnn_oi\n\nd = 2\ngamma = 1.0\n";
        let cfg = train_config_from_text(text).unwrap();
        assert_eq!(cfg.variant, Variant::RnnOi);
        assert_eq!(cfg.gamma, 1.0);
    }

    #[test]
    fn duplicate_and_malformed_lines_rejected() {
        assert!(matches!(
            train_config_from_text("variant = rnn_opt\nvariant = rnn_oi\nd = 2\n"),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(matches!(
            train_config_from_text("variant rnn_opt\n"),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn inference_only_variant_rejected() {
        let err = train_config_from_text("variant = rnn_opt_p\nd = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Semantic(_)));
    }

    #[test]
    fn round_trips_through_text() {
        let text = "variant = rnn_opt_dc\nd = 2\nt = 12\ngamma = 0.97\nunits = 24\nseed = 9\n";
        let cfg = train_config_from_text(text).unwrap();
        let cfg2 = train_config_from_text(&train_config_to_text(&cfg)).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn discount_matrix_from_config_files() {
        for (variant, gamma) in
            [("rnn_opt_basic", "0.98"), ("rnn_opt_basic", "1.0"), ("rnn_oi", "0.98"), ("rnn_oi", "1.0")]
        {
            let text = format!("variant = {variant}\nd = 2\ngamma = {gamma}\n");
            let cfg = train_config_from_text(&text).unwrap();
            assert_eq!(cfg.gamma, gamma.parse::<f64>().unwrap());
        }
    }
}
