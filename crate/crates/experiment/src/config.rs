//! Experiment configuration: a single JSON document layered over named
//! presets and `BPFL_` environment overrides.
//!
//! Resolution order, later wins: built-in defaults, preset, config file,
//! environment. An environment variable `BPFL_A__B=v` sets key `a.b`; `v`
//! is parsed as JSON and falls back to a plain string.

use std::path::Path;
use std::str::FromStr;

use bpfl_core::adversary::{AttackKind, AttackSpec};
use bpfl_core::circuit::ComparisonMode;
use bpfl_core::field::{FieldParams, Fr};
use bpfl_core::fl::{AggregationRule, ModelFamily};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::data::{MnistSpec, SyntheticSpec};

pub const ENV_PREFIX: &str = "BPFL_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config error at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("{origin}: invalid JSON: {message}")]
    Json { origin: String, message: String },
    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Inproc,
    Tcp,
}

impl FromStr for TransportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(format!("unknown transport `{other}`, expected inproc or tcp")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    /// Only `bn254` is supported.
    pub name: String,
    pub hash_rounds: usize,
    /// Must describe the compiled field; recorded so runs are self-describing.
    pub params: FieldParams,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            name: "bn254".into(),
            hash_rounds: bpfl_core::circuit::hash::DEFAULT_HASH_ROUNDS,
            params: FieldParams::of::<Fr>(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 5,
            learning_rate: 0.1,
            batch_size: 16,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    MnistIdx(MnistSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub num_clients: usize,
    pub attack: AttackSpec,
    /// `masked_sum` runs the full protocol; other rules run a plaintext
    /// simulation of the same training loop.
    pub aggregation: AggregationRule,
    pub model: ModelFamily,
    pub tau_c: f64,
    pub tau_e: f64,
    pub comparison: ComparisonMode,
    /// Fixed-point scale `k = 2^scale_bits`.
    pub scale_bits: u32,
    pub weight_bound: f64,
    pub field: FieldConfig,
    pub rounds: usize,
    pub training: TrainingConfig,
    pub seed: u64,
    pub dataset: DatasetSource,
    /// Size of the server's root dataset.
    pub server_samples: usize,
    pub paillier_bits: u64,
    pub transport: TransportKind,
    pub renegotiate_mask: bool,
    pub parallel: bool,
    /// Also run attack-free FedAvg to report attack impact.
    pub baseline: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "default".into(),
            num_clients: 10,
            attack: AttackSpec::none(),
            aggregation: AggregationRule::MaskedSum,
            model: ModelFamily::Logistic,
            tau_c: 0.5,
            tau_e: 4.0,
            comparison: ComparisonMode::Weights,
            scale_bits: bpfl_core::fixed::DEFAULT_SCALE_BITS,
            weight_bound: bpfl_core::fixed::DEFAULT_WEIGHT_BOUND,
            field: FieldConfig::default(),
            rounds: 10,
            training: TrainingConfig::default(),
            seed: 0,
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            server_samples: 200,
            paillier_bits: bpfl_core::paillier::DEFAULT_KEY_BITS,
            transport: TransportKind::Inproc,
            renegotiate_mask: false,
            parallel: false,
            baseline: false,
        }
    }
}

/// The 64-parameter synthetic task shared by the small presets. Honest
/// models stay within cosine 0.95 and distance 1.0 of the server model.
/// With fewer root samples the server model drifts off the client consensus
/// over long runs.
fn desk_task() -> Value {
    json!({
        "server_samples": 1000,
        "dataset": {"source": "synthetic", "classes": 2, "features": 31, "per_class": 500,
                    "separation": 8.0, "test_per_class": 250},
        "training": {"epochs": 5, "learning_rate": 0.1, "batch_size": 64, "weight_decay": 0.01},
        "tau_c": 0.95,
        "tau_e": 1.0
    })
}

fn with_desk_task(extra: Value) -> Value {
    let mut v = desk_task();
    merge(&mut v, extra);
    v
}

/// Named partial configs.
pub fn presets() -> Vec<(&'static str, Value)> {
    vec![
        (
            "honest-smoke",
            with_desk_task(json!({"name": "honest-smoke", "num_clients": 5, "rounds": 10})),
        ),
        (
            "completeness",
            with_desk_task(json!({"name": "completeness", "num_clients": 10, "rounds": 50})),
        ),
        (
            "signflip-20pct",
            with_desk_task(json!({
                "name": "signflip-20pct",
                "num_clients": 10,
                "rounds": 10,
                "attack": {"kind": "sign_flip", "scale": 1.0, "fraction": 0.2},
                "baseline": true
            })),
        ),
        (
            "reference-defaults",
            json!({
                "name": "reference-defaults",
                "tau_c": 0.99,
                "tau_e": 0.93,
                "server_samples": 200,
                "training": {"epochs": 5},
                "rounds": 300
            }),
        ),
        (
            "reference-defaults-loose",
            json!({
                "name": "reference-defaults-loose",
                "tau_c": 0.99,
                "tau_e": 30.0,
                "server_samples": 200,
                "training": {"epochs": 5},
                "rounds": 300
            }),
        ),
        (
            "robustness",
            json!({
                "name": "robustness",
                "num_clients": 20,
                "rounds": 20,
                "attack": {"kind": "sign_flip", "scale": 10.0, "fraction": 0.2},
                "dataset": {"source": "synthetic", "classes": 2, "features": 4,
                            "per_class": 400, "separation": 3.0, "test_per_class": 500},
                "tau_c": 0.8,
                "tau_e": 2.0,
                "baseline": true
            }),
        ),
        (
            "mnist-smoke",
            json!({
                "name": "mnist-smoke",
                "num_clients": 10,
                "rounds": 10,
                "server_samples": 200,
                "dataset": {"source": "mnist_idx", "dir": "data/mnist", "subset": 2000,
                            "test_subset": 2000, "pool": 4},
                "tau_c": 0.5,
                "tau_e": 8.0
            }),
        ),
    ]
}

pub fn preset(name: &str) -> Result<Value, ConfigError> {
    let all = presets();
    all.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| ConfigError::UnknownPreset {
            name: name.into(),
            available: all.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
        })
}

/// Keys whose value selects an enum variant; objects that disagree on them
/// are replaced rather than merged.
const TAGS: [&str; 4] = ["kind", "source", "rule", "family"];

/// Recursive merge of `top` into `base`.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            let switches = TAGS
                .iter()
                .any(|k| t.get(*k).is_some_and(|v| b.get(*k).is_some_and(|old| old != v)));
            if switches {
                *b = t;
                return;
            }
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, top) => *slot = top,
    }
}

/// Turns `BPFL_A__B=v` pairs into a JSON object `{"a": {"b": v}}`.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(vars: I) -> Value {
    let mut root = Value::Object(Map::new());
    for (key, raw) in vars {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
        if rest.is_empty() {
            continue;
        }
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let mut nested = value;
        for seg in rest.to_lowercase().split("__").collect::<Vec<_>>().into_iter().rev() {
            let mut m = Map::new();
            m.insert(seg.to_string(), nested);
            nested = Value::Object(m);
        }
        merge(&mut root, nested);
    }
    root
}

/// Builds and validates a config from its layers.
pub fn resolve<I: IntoIterator<Item = (String, String)>>(
    preset_name: Option<&str>,
    file: Option<&Path>,
    env: I,
) -> Result<ExperimentConfig, ConfigError> {
    let mut value = serde_json::to_value(ExperimentConfig::default()).expect("defaults serialize");
    if let Some(name) = preset_name {
        merge(&mut value, preset(name)?);
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Json {
            origin: path.display().to_string(),
            message: e.to_string(),
        })?;
        if !doc.is_object() {
            return Err(invalid("", "the config document must be a JSON object"));
        }
        merge(&mut value, doc);
    }
    merge(&mut value, env_overrides(env));
    from_value(value)
}

/// Deserializes and validates, reporting the offending field path.
pub fn from_value(value: Value) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| ConfigError::Invalid {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_clients == 0 {
            return Err(invalid("num_clients", "need at least one client"));
        }
        let f = self.attack.fraction;
        if !(0.0..0.5).contains(&f) {
            return Err(invalid(
                "attack.fraction",
                format!("{f} is not in [0, 0.5): malicious clients must be a minority (less than 50%)"),
            ));
        }
        if !(0.0..=1.0).contains(&self.tau_c) {
            return Err(invalid("tau_c", format!("{} is not in [0, 1]", self.tau_c)));
        }
        if !(self.tau_e.is_finite() && self.tau_e > 0.0) {
            return Err(invalid("tau_e", format!("{} must be positive", self.tau_e)));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "need at least one round"));
        }
        if self.server_samples == 0 {
            return Err(invalid("server_samples", "the server needs a nonempty root dataset"));
        }
        if !(1..=40).contains(&self.scale_bits) {
            return Err(invalid("scale_bits", format!("{} is not in 1..=40", self.scale_bits)));
        }
        if !(self.weight_bound.is_finite() && self.weight_bound > 0.0) {
            return Err(invalid("weight_bound", "must be positive"));
        }
        if self.field.name != "bn254" {
            return Err(invalid("field.name", format!("unsupported field `{}`, expected bn254", self.field.name)));
        }
        if let Err(e) = self.field.params.validate().and_then(|_| self.field.params.ensure_matches::<Fr>()) {
            return Err(invalid("field.params", e.to_string()));
        }
        if self.field.hash_rounds == 0 {
            return Err(invalid("field.hash_rounds", "need at least one round"));
        }
        if self.training.epochs == 0 || self.training.batch_size == 0 {
            return Err(invalid("training", "epochs and batch_size must be at least 1"));
        }
        if !(self.training.learning_rate.is_finite() && self.training.learning_rate > 0.0) {
            return Err(invalid("training.learning_rate", "must be positive"));
        }
        if self.paillier_bits < 128 {
            return Err(invalid("paillier_bits", "need at least 128 bits"));
        }
        if let ModelFamily::Mlp { hidden: 0 } = self.model {
            return Err(invalid("model.hidden", "need at least one hidden unit"));
        }
        match &self.dataset {
            DatasetSource::Synthetic(s) => {
                if s.classes < 2 || s.features == 0 || s.per_class == 0 || s.test_per_class == 0 {
                    return Err(invalid("dataset", "need >= 2 classes and nonzero counts"));
                }
                if !(s.separation.is_finite() && s.separation > 0.0) {
                    return Err(invalid("dataset.separation", "must be positive"));
                }
                if s.classes * s.per_class < self.num_clients {
                    return Err(invalid("dataset.per_class", "fewer training samples than clients"));
                }
            }
            DatasetSource::MnistIdx(m) => {
                if m.pool == 0 || 28 % m.pool != 0 {
                    return Err(invalid("dataset.pool", "must divide 28"));
                }
                if m.subset < self.num_clients || m.test_subset == 0 {
                    return Err(invalid("dataset.subset", "too few samples"));
                }
            }
        }
        let masked = self.aggregation == AggregationRule::MaskedSum;
        if !masked && matches!(self.attack.kind, AttackKind::Malicious { .. }) {
            return Err(invalid(
                "attack.kind",
                "protocol deviations need aggregation.rule = masked_sum",
            ));
        }
        let n = self.num_clients;
        match self.aggregation {
            AggregationRule::Krum { f } if n < 2 * f + 3 => {
                return Err(invalid("aggregation.f", format!("krum needs n >= 2f + 3, got n = {n}, f = {f}")));
            }
            AggregationRule::Bulyan { f } if n < 4 * f + 3 => {
                return Err(invalid("aggregation.f", format!("bulyan needs n >= 4f + 3, got n = {n}, f = {f}")));
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_and_presets_are_valid() {
        ExperimentConfig::default().validate().unwrap();
        for (name, _) in presets() {
            let c = resolve(Some(name), None, env(&[])).unwrap();
            assert_eq!(c.name, name);
        }
        let smoke = resolve(Some("honest-smoke"), None, env(&[])).unwrap();
        assert_eq!(smoke.num_clients, 5);
        assert_eq!(smoke.rounds, 10);
        let DatasetSource::Synthetic(s) = smoke.dataset else { panic!() };
        assert_eq!(s.features * s.classes + s.classes, 64);
        let reference = resolve(Some("reference-defaults"), None, env(&[])).unwrap();
        assert_eq!((reference.tau_c, reference.tau_e, reference.server_samples, reference.rounds), (0.99, 0.93, 200, 300));
        assert_eq!(reference.training.epochs, 5);
        assert_eq!(resolve(Some("reference-defaults-loose"), None, env(&[])).unwrap().tau_e, 30.0);
    }

    #[test]
    fn env_overrides_nested_keys() {
        let c = resolve(
            Some("honest-smoke"),
            None,
            env(&[
                ("BPFL_ATTACK__FRACTION", "0.2"),
                ("BPFL_ATTACK__KIND", "\"add_noise\""),
                ("BPFL_ATTACK__SIGMA", "0.5"),
                ("BPFL_TAU_C", "0.75"),
                ("BPFL_NAME", "plain string"),
                ("OTHER", "ignored"),
            ]),
        )
        .unwrap();
        assert_eq!(c.tau_c, 0.75);
        assert_eq!(c.name, "plain string");
        assert_eq!(c.attack.fraction, 0.2);
        assert_eq!(c.attack.kind, AttackKind::AddNoise { sigma: 0.5 });
    }

    #[test]
    fn schema_errors_cite_the_field() {
        let err = resolve(None, None, env(&[("BPFL_ATTACK__FRACTION", "0.6")])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("attack.fraction") && msg.contains("minority"), "{msg}");

        let err = from_value(json!({"training": {"epochs": "five"}})).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { path, .. } if path == "training.epochs"), "{err}");

        let err = from_value(json!({"num_clientz": 3})).unwrap_err();
        assert!(err.to_string().contains("num_clientz"), "{err}");

        let err = from_value(json!({"field": {"name": "bls12"}})).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { path, .. } if path == "field.name"));

        let err = from_value(json!({"field": {"params": {"modulus": "101", "two_adicity": 2, "hash_exponent": 3}}}))
            .unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { path, .. } if path == "field.params"), "{err}");
        let err = from_value(json!({"field": {"params": {"modulus": 12, "two_adicity": 2, "hash_exponent": 3}}}))
            .unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { path, .. } if path == "field.params.modulus"), "{err}");

        let err = from_value(json!({"aggregation": {"rule": "krum", "f": 4}, "num_clients": 10})).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { path, .. } if path == "aggregation.f"));

        let err = from_value(json!({
            "aggregation": {"rule": "fed_avg"},
            "attack": {"kind": "malicious", "behavior": "forged_proof", "fraction": 0.1}
        }))
        .unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { path, .. } if path == "attack.kind"));

        assert!(matches!(preset("nope"), Err(ConfigError::UnknownPreset { .. })));
    }

    #[test]
    fn switching_variants_replaces_the_object() {
        let mut base = json!({"attack": {"kind": "sign_flip", "scale": 2.0, "fraction": 0.1}});
        merge(&mut base, json!({"attack": {"kind": "add_noise", "sigma": 1.0, "fraction": 0.2}}));
        assert_eq!(base, json!({"attack": {"kind": "add_noise", "sigma": 1.0, "fraction": 0.2}}));
        let mut base = json!({"attack": {"kind": "sign_flip", "scale": 2.0, "fraction": 0.1}});
        merge(&mut base, json!({"attack": {"fraction": 0.3}}));
        assert_eq!(base, json!({"attack": {"kind": "sign_flip", "scale": 2.0, "fraction": 0.3}}));
    }

    #[test]
    fn file_layer() {
        let dir = std::env::temp_dir().join(format!("bpfl-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"num_clients": 7, "dataset": {"source": "synthetic", "per_class": 30}}"#).unwrap();
        let c = resolve(Some("honest-smoke"), Some(&path), env(&[("BPFL_SEED", "9")])).unwrap();
        assert_eq!((c.num_clients, c.seed), (7, 9));
        let DatasetSource::Synthetic(s) = c.dataset else { panic!() };
        assert_eq!((s.per_class, s.features), (30, 31));
        std::fs::write(&path, "[1, 2]").unwrap();
        assert!(resolve(None, Some(&path), env(&[])).is_err());
        std::fs::write(&path, "{ nope").unwrap();
        assert!(matches!(resolve(None, Some(&path), env(&[])), Err(ConfigError::Json { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn config_roundtrips_through_json() {
        let c = resolve(Some("robustness"), None, env(&[])).unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(from_value(serde_json::from_str(&text).unwrap()).unwrap(), c);
    }
}
