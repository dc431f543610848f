//! Training configuration.
//!
//! Stored on disk as flat `key = value` lines (`#` starts a comment). Values
//! are JSON scalars; bare words are read as strings. Unknown keys are errors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::numeric::AdamConfig;
use crate::structures::StructureKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {message}")]
    Value { key: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which earlier-layer sequence the mutual-information term compares with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MiSource {
    /// BiLSTM states.
    H,
    /// BiLSTM inputs (distance embeddings plus word vectors).
    X,
    /// Word vectors alone.
    E,
}

/// A structure removed from the initial set (ablation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropStructure {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "A_d")]
    Dep,
    #[serde(rename = "A_a")]
    Arg,
    #[serde(rename = "A_e")]
    Trig,
    #[serde(rename = "A_s")]
    Sem,
}

impl DropStructure {
    pub fn kind(self) -> Option<StructureKind> {
        match self {
            Self::None => None,
            Self::Dep => Some(StructureKind::Dep),
            Self::Arg => Some(StructureKind::Arg),
            Self::Trig => Some(StructureKind::Trig),
            Self::Sem => Some(StructureKind::Sem),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(rename = "adam.beta1")]
    pub adam_beta1: f64,
    #[serde(rename = "adam.beta2")]
    pub adam_beta2: f64,
    #[serde(rename = "adam.eps")]
    pub adam_eps: f64,

    pub d_dist: usize,
    pub dist_clip: usize,
    pub d_len: usize,
    pub len_max: usize,
    /// BiLSTM output width (both directions together).
    pub d_h: usize,
    #[serde(rename = "lstm.layers")]
    pub lstm_layers: usize,
    /// Hidden width of the path-length pair scorers.
    pub ff_hidden: usize,
    pub key_dim: usize,
    #[serde(rename = "gcn.hidden")]
    pub gcn_hidden: usize,
    #[serde(rename = "gcn.layers")]
    pub gcn_layers: usize,
    #[serde(rename = "gtn.channels")]
    pub channels: usize,
    #[serde(rename = "gtn.intermediates")]
    pub intermediates: usize,
    #[serde(rename = "head.hidden")]
    pub head_hidden: usize,
    #[serde(rename = "disc.hidden")]
    pub disc_hidden: usize,

    #[serde(rename = "ib.enabled")]
    pub use_ib: bool,
    #[serde(rename = "ib.alpha_disc")]
    pub alpha_disc: f64,
    #[serde(rename = "ib.mi_source")]
    pub mi_source: MiSource,

    #[serde(rename = "ablation.use_gtn")]
    pub use_gtn: bool,
    #[serde(rename = "ablation.use_multihop")]
    pub use_multihop: bool,
    #[serde(rename = "ablation.use_syn_custom")]
    pub use_syn_custom: bool,
    #[serde(rename = "ablation.use_sem_custom")]
    pub use_sem_custom: bool,
    /// Adds pooled BiLSTM states and `h_a`, `h_e` to the role representation.
    #[serde(rename = "ablation.lstm_in_r")]
    pub lstm_in_r: bool,
    #[serde(rename = "ablation.drop_structure")]
    pub drop_structure: DropStructure,

    /// Also report training-set role accuracy after every epoch.
    pub track_train_accuracy: bool,

    pub corpus: Option<String>,
    pub dev_corpus: Option<String>,
    pub test_corpus: Option<String>,
    pub embeddings: Option<String>,
    /// Per-sentence precomputed word vectors (JSONL); overrides `embeddings`.
    pub vectors: Option<String>,
    pub checkpoint: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            d_dist: 30,
            dist_clip: 60,
            d_len: 30,
            len_max: 15,
            d_h: 200,
            lstm_layers: 2,
            ff_hidden: 200,
            key_dim: 200,
            gcn_hidden: 200,
            gcn_layers: 2,
            channels: 3,
            intermediates: 3,
            head_hidden: 200,
            disc_hidden: 200,
            use_ib: true,
            alpha_disc: 0.1,
            mi_source: MiSource::H,
            use_gtn: true,
            use_multihop: true,
            use_syn_custom: true,
            use_sem_custom: true,
            lstm_in_r: false,
            drop_structure: DropStructure::None,
            track_train_accuracy: false,
            corpus: None,
            dev_corpus: None,
            test_corpus: None,
            embeddings: None,
            vectors: None,
            checkpoint: None,
        }
    }
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    if raw.is_empty() {
        return Value::Null;
    }
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    fn to_map(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(m) => m,
            _ => unreachable!("struct serializes to an object"),
        }
    }

    fn from_map(map: Map<String, Value>) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError::Value {
            key: "<config>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let mut map = self.to_map();
        if !map.contains_key(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        map.insert(key.to_string(), parse_value(raw));
        let updated: Self = serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError::Value {
            key: key.to_string(),
            message: e.to_string(),
        })?;
        *self = updated;
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: line.to_string(),
                });
            };
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_map() {
            let v = match v {
                Value::Null => String::new(),
                Value::String(s) => s,
                other => other.to_string(),
            };
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let v: Value = serde_json::from_str(s).map_err(|e| ConfigError::Value {
            key: "<json>".into(),
            message: e.to_string(),
        })?;
        match v {
            Value::Object(m) => Self::from_map(m),
            _ => Err(ConfigError::Invalid("config JSON is not an object".into())),
        }
    }

    /// FNV-1a over the canonical JSON form, as 16 hex digits.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a(self.to_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("batch_size", self.batch_size),
            ("d_dist", self.d_dist),
            ("d_len", self.d_len),
            ("d_h", self.d_h),
            ("lstm.layers", self.lstm_layers),
            ("ff_hidden", self.ff_hidden),
            ("key_dim", self.key_dim),
            ("gcn.hidden", self.gcn_hidden),
            ("gcn.layers", self.gcn_layers),
            ("gtn.channels", self.channels),
            ("gtn.intermediates", self.intermediates),
            ("head.hidden", self.head_hidden),
            ("disc.hidden", self.disc_hidden),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{k} must be positive")));
            }
        }
        if !self.d_h.is_multiple_of(2) {
            return Err(ConfigError::Invalid("d_h must be even".into()));
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return Err(ConfigError::Invalid("lr and adam.eps must be positive".into()));
        }
        for (k, b) in [("adam.beta1", self.adam_beta1), ("adam.beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(ConfigError::Invalid(format!("{k} must lie in [0, 1)")));
            }
        }
        if !(self.alpha_disc >= 0.0) {
            return Err(ConfigError::Invalid("ib.alpha_disc must be non-negative".into()));
        }
        Ok(())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.d_dist, c.d_len, c.d_h, c.gcn_hidden), (30, 30, 200, 200));
        assert_eq!((c.channels, c.intermediates, c.gcn_layers), (3, 3, 2));
        assert_eq!(c.alpha_disc, 0.1);
        assert_eq!(c.adam(), AdamConfig::default());
    }

    #[test]
    fn kv_round_trip() {
        let mut c = TrainConfig::default();
        c.set("ib.mi_source", "X").unwrap();
        c.set("ablation.drop_structure", "A_s").unwrap();
        c.set("corpus", "data/train.jsonl").unwrap();
        c.set("lr", "0.01").unwrap();
        let back = TrainConfig::parse(&c.to_kv_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(TrainConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(matches!(TrainConfig::parse("nope = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(TrainConfig::parse("epochs = many").is_err());
        assert!(TrainConfig::parse("just a line").is_err());
        assert!(TrainConfig::parse("ib.mi_source = Q").is_err());
        assert!(TrainConfig::parse("d_h = 7").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = TrainConfig::parse("# header\n\nepochs = 3 # trailing\nib.enabled = false\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert!(!c.use_ib);
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
