//! Run configuration: documented defaults, JSON file values and per-flag
//! overrides, resolved with precedence `flags > file > defaults`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::DatasetName;
use crate::error::{Error, Result};
use crate::proto::{EmaConvention, HardAssign, SimilarityMode, TemperatureSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub n_prototypes: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta: f64,
    pub lr: f64,
    pub eta: f64,
    pub lambda_ortho: f64,
    pub similarity: SimilarityMode,
    pub ema_convention: EmaConvention,
    pub hard_assign: HardAssign,
    pub seed: u64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub anneal_fraction: f64,
    /// Train on only the first `n` training images when set.
    pub train_subset: Option<usize>,
    pub knn_k: usize,
    pub bank_size: usize,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub elbow_k_min: usize,
    pub elbow_k_max: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_dataset(DatasetName::Mnist)
    }
}

impl TrainConfig {
    pub fn for_dataset(dataset: DatasetName) -> Self {
        Self {
            latent_dim: 32,
            n_prototypes: match dataset {
                DatasetName::Mnist => 10,
                DatasetName::Pneumonia => 8,
            },
            batch_size: 2048,
            epochs: 50,
            beta: 1.0,
            lr: 1e-3,
            eta: 0.95,
            lambda_ortho: 0.0,
            similarity: SimilarityMode::Cosine,
            ema_convention: EmaConvention::Paper,
            hard_assign: HardAssign::Sample,
            seed: 0,
            tau_start: 1.0,
            tau_end: 0.01,
            anneal_fraction: 0.5,
            train_subset: None,
            knn_k: 5,
            bank_size: 5000,
            probe_epochs: 200,
            probe_lr: 3e-4,
            elbow_k_min: 2,
            elbow_k_max: 20,
        }
    }

    pub fn schedule(&self) -> TemperatureSchedule {
        TemperatureSchedule {
            tau_start: self.tau_start,
            tau_end: self.tau_end,
            anneal_fraction: self.anneal_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config { key: key.into(), msg });
        if self.latent_dim < 1 {
            return bad("latent_dim", "must be >= 1".into());
        }
        if self.n_prototypes < 2 {
            return bad("n_prototypes", "must be >= 2".into());
        }
        if self.batch_size < self.n_prototypes {
            return bad("batch_size", format!("must be >= n_prototypes ({})", self.n_prototypes));
        }
        if self.epochs < 1 {
            return bad("epochs", "must be >= 1".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta", "must be finite and >= 0".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be > 0".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta", "must lie in [0, 1]".into());
        }
        if !(self.lambda_ortho >= 0.0 && self.lambda_ortho.is_finite()) {
            return bad("lambda_ortho", "must be finite and >= 0".into());
        }
        if !(self.tau_end > 0.0 && self.tau_start >= self.tau_end) {
            return bad("tau_end", "need tau_start >= tau_end > 0".into());
        }
        if !(0.0..=1.0).contains(&self.anneal_fraction) {
            return bad("anneal_fraction", "must lie in [0, 1]".into());
        }
        if self.train_subset == Some(0) {
            return bad("train_subset", "must be >= 1 when set".into());
        }
        if self.knn_k < 1 {
            return bad("knn_k", "must be >= 1".into());
        }
        if self.bank_size < self.knn_k {
            return bad("bank_size", format!("must be >= knn_k ({})", self.knn_k));
        }
        if self.elbow_k_min < 1 || self.elbow_k_max < self.elbow_k_min + 2 {
            return bad("elbow_k_max", "elbow range needs >= 3 values starting at >= 1".into());
        }
        if !(self.probe_lr > 0.0) {
            return bad("probe_lr", "must be > 0".into());
        }
        Ok(())
    }

    /// Sets one field from a JSON value. Unknown keys and type mismatches
    /// report the offending key.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        fn parse<T: serde::de::DeserializeOwned>(key: &str, v: &Value) -> Result<T> {
            serde_json::from_value(v.clone()).map_err(|e| Error::Config {
                key: key.into(),
                msg: e.to_string(),
            })
        }
        match key {
            "latent_dim" => self.latent_dim = parse(key, value)?,
            "n_prototypes" => self.n_prototypes = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "lambda_ortho" => self.lambda_ortho = parse(key, value)?,
            "similarity" => self.similarity = parse(key, value)?,
            "ema_convention" => self.ema_convention = parse(key, value)?,
            "hard_assign" => self.hard_assign = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "tau_start" => self.tau_start = parse(key, value)?,
            "tau_end" => self.tau_end = parse(key, value)?,
            "anneal_fraction" => self.anneal_fraction = parse(key, value)?,
            "train_subset" => self.train_subset = parse(key, value)?,
            "knn_k" => self.knn_k = parse(key, value)?,
            "bank_size" => self.bank_size = parse(key, value)?,
            "probe_epochs" => self.probe_epochs = parse(key, value)?,
            "probe_lr" => self.probe_lr = parse(key, value)?,
            "elbow_k_min" => self.elbow_k_min = parse(key, value)?,
            "elbow_k_max" => self.elbow_k_max = parse(key, value)?,
            _ => {
                return Err(Error::Config {
                    key: key.into(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Applies every entry of a JSON object.
    pub fn merge(&mut self, values: &Map<String, Value>) -> Result<()> {
        for (k, v) in values {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// A short, stable digest of the configuration (FNV-1a over its JSON form).
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Parses a config file body. An empty or whitespace-only file is an empty object.
pub fn parse_config_text(text: &str) -> Result<Map<String, Value>> {
    if text.trim().is_empty() {
        return Ok(Map::new());
    }
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::Config {
            key: "<root>".into(),
            msg: "config must be a JSON object".into(),
        }),
        Err(e) => Err(Error::Config {
            key: "<root>".into(),
            msg: e.to_string(),
        }),
    }
}

/// Defaults for `dataset`, then the file (if any), then `overrides`, then validation.
pub fn resolve_config(
    dataset: DatasetName,
    file: Option<&Path>,
    overrides: &Map<String, Value>,
) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::for_dataset(dataset);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.merge(&parse_config_text(&text)?)?;
    }
    cfg.merge(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, "").unwrap();
        let cfg = resolve_config(DatasetName::Mnist, Some(&path), &Map::new()).unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cfg.latent_dim, 32);
        assert_eq!(cfg.batch_size, 2048);
        assert_eq!(cfg.n_prototypes, 10);
        assert_eq!(TrainConfig::for_dataset(DatasetName::Pneumonia).n_prototypes, 8);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"latent_dim": 16, "epochs": 3}"#).unwrap();
        let cfg = resolve_config(DatasetName::Mnist, Some(&path), &obj(json!({"latent_dim": 64}))).unwrap();
        assert_eq!(cfg.latent_dim, 64);
        assert_eq!(cfg.epochs, 3);
    }

    #[test]
    fn type_mismatch_names_key() {
        let err = TrainConfig::default().merge(&obj(json!({"eta": "high"}))).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "eta"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let err = TrainConfig::default()
            .merge(&obj(json!({"latnet_dim": 3})))
            .unwrap_err();
        assert!(matches!(err, Error::Config { key, .. } if key == "latnet_dim"));
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::default();
        c.batch_size = 0;
        assert!(matches!(c.validate(), Err(Error::Config { key, .. }) if key == "batch_size"));
        let mut c = TrainConfig::default();
        c.n_prototypes = 1;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.eta = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn enum_values_parse() {
        let mut c = TrainConfig::default();
        c.merge(&obj(
            json!({"similarity": "dot", "ema_convention": "standard", "hard_assign": "argmax"}),
        ))
        .unwrap();
        assert_eq!(c.similarity, SimilarityMode::Dot);
        assert_eq!(c.ema_convention, EmaConvention::Standard);
        assert_eq!(c.hard_assign, HardAssign::Argmax);
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = TrainConfig::for_dataset(DatasetName::Pneumonia);
        let v = serde_json::to_value(&c).unwrap();
        let mut back = TrainConfig::default();
        back.merge(v.as_object().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
    }
}
