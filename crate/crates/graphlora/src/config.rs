//! Flat `key = value` configuration for the host model and training.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: invalid value {value:?}")]
    InvalidValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Attention,
    Weak,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeMode {
    Full,
    None,
}

/// Node categories that can be removed from the graph for ablations. Patch
/// nodes are never dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeDrop {
    Variable,
    Control,
    Context,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HostConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub max_seq_len: usize,
    pub vocab_capacity: usize,
    pub rank: usize,
    pub adapter_heads: usize,
    pub gnn_hidden: usize,
}

impl Default for HostConfig {
    fn default() -> Self {
        HostConfig {
            d_model: 64,
            layers: 2,
            heads: 4,
            ffn_width: 256,
            max_seq_len: 256,
            vocab_capacity: 32000,
            rank: 8,
            adapter_heads: 4,
            gnn_hidden: 64,
        }
    }
}

pub const MAX_SEQ_LEN_CEILING: usize = 1024;
pub const RANK_CEILING: usize = 256;
pub const DEFAULT_PEAK_LR: f64 = 5e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Gradient accumulation window; examples are processed one at a time.
    pub batch_size: usize,
    pub lr: f64,
    /// Allow a learning rate outside (0, 5e-5].
    pub lr_override: bool,
    pub warmup_steps: u64,
    pub seed: u64,
    pub fusion: FusionMode,
    pub attributes: AttributeMode,
    pub drop_nodes: BTreeSet<NodeDrop>,
    pub k: usize,
    pub include_ground_truth: bool,
    /// Log training-set accuracy after every epoch.
    pub track_train_accuracy: bool,
    /// Stop once a full pass over the training set reaches this accuracy.
    pub stop_at_train_accuracy: Option<f64>,
    pub host: HostConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 1,
            lr: DEFAULT_PEAK_LR,
            lr_override: false,
            warmup_steps: 0,
            seed: 0,
            fusion: FusionMode::Attention,
            attributes: AttributeMode::Full,
            drop_nodes: BTreeSet::new(),
            k: 10,
            include_ground_truth: false,
            track_train_accuracy: false,
            stop_at_train_accuracy: None,
            host: HostConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
    })
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::InvalidValue {
            key: key.into(),
            value: value.into(),
        };
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_override" => self.lr_override = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "fusion" => {
                self.fusion = match value {
                    "attention" => FusionMode::Attention,
                    "weak" => FusionMode::Weak,
                    "none" => FusionMode::None,
                    _ => return Err(bad()),
                }
            }
            "attributes" => {
                self.attributes = match value {
                    "full" => AttributeMode::Full,
                    "none" => AttributeMode::None,
                    _ => return Err(bad()),
                }
            }
            "drop_nodes" => {
                self.drop_nodes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty() && *s != "none")
                    .map(|s| match s {
                        "variable" => Ok(NodeDrop::Variable),
                        "control" => Ok(NodeDrop::Control),
                        "context" => Ok(NodeDrop::Context),
                        _ => Err(bad()),
                    })
                    .collect::<Result<_, _>>()?
            }
            "k" => self.k = parse(key, value)?,
            "include_ground_truth" => self.include_ground_truth = parse(key, value)?,
            "track_train_accuracy" => self.track_train_accuracy = parse(key, value)?,
            "stop_at_train_accuracy" => {
                self.stop_at_train_accuracy = if value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "d_model" => self.host.d_model = parse(key, value)?,
            "layers" => self.host.layers = parse(key, value)?,
            "heads" => self.host.heads = parse(key, value)?,
            "ffn_width" => self.host.ffn_width = parse(key, value)?,
            "max_seq_len" => self.host.max_seq_len = parse(key, value)?,
            "vocab_capacity" => self.host.vocab_capacity = parse(key, value)?,
            "rank" => self.host.rank = parse(key, value)?,
            "adapter_heads" => self.host.adapter_heads = parse(key, value)?,
            "gnn_hidden" => self.host.gnn_hidden = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let h = &self.host;
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if !self.lr.is_finite() || self.lr < 0.0 {
            return fail(format!(
                "lr must be finite and non-negative, got {}",
                self.lr
            ));
        }
        if !self.lr_override && !(self.lr > 0.0 && self.lr <= DEFAULT_PEAK_LR) {
            return fail(format!(
                "lr {} outside (0, {DEFAULT_PEAK_LR}]; set lr_override = true to allow it",
                self.lr
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if let Some(a) = self.stop_at_train_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return fail(format!(
                    "stop_at_train_accuracy must lie in [0, 1], got {a}"
                ));
            }
        }
        if h.d_model == 0 || h.heads == 0 || !h.d_model.is_multiple_of(h.heads) {
            return fail(format!(
                "d_model {} must be a positive multiple of heads {}",
                h.d_model, h.heads
            ));
        }
        if h.layers == 0 || h.ffn_width == 0 || h.gnn_hidden == 0 {
            return fail("layers, ffn_width and gnn_hidden must be positive".into());
        }
        if h.max_seq_len < 2 || h.max_seq_len > MAX_SEQ_LEN_CEILING {
            return fail(format!(
                "max_seq_len must lie in [2, {MAX_SEQ_LEN_CEILING}], got {}",
                h.max_seq_len
            ));
        }
        if h.vocab_capacity < crate::vocab::SPECIALS.len() + 1 {
            return fail(format!("vocab_capacity {} is too small", h.vocab_capacity));
        }
        if h.rank == 0 || h.rank > RANK_CEILING || h.rank > h.d_model {
            return fail(format!(
                "rank must lie in [1, min({RANK_CEILING}, d_model)], got {}",
                h.rank
            ));
        }
        if h.adapter_heads == 0 || !h.rank.is_multiple_of(h.adapter_heads) {
            return fail(format!(
                "rank {} must be a positive multiple of adapter_heads {}",
                h.rank, h.adapter_heads
            ));
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let h = &self.host;
        let fusion = match self.fusion {
            FusionMode::Attention => "attention",
            FusionMode::Weak => "weak",
            FusionMode::None => "none",
        };
        let attributes = match self.attributes {
            AttributeMode::Full => "full",
            AttributeMode::None => "none",
        };
        let drops: Vec<&str> = self
            .drop_nodes
            .iter()
            .map(|d| match d {
                NodeDrop::Variable => "variable",
                NodeDrop::Control => "control",
                NodeDrop::Context => "context",
            })
            .collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", format!("{:e}", self.lr));
        kv("lr_override", self.lr_override.to_string());
        kv("warmup_steps", self.warmup_steps.to_string());
        kv("seed", self.seed.to_string());
        kv("fusion", fusion.into());
        kv("attributes", attributes.into());
        kv(
            "drop_nodes",
            if drops.is_empty() {
                "none".into()
            } else {
                drops.join(",")
            },
        );
        kv("k", self.k.to_string());
        kv(
            "include_ground_truth",
            self.include_ground_truth.to_string(),
        );
        kv(
            "track_train_accuracy",
            self.track_train_accuracy.to_string(),
        );
        kv(
            "stop_at_train_accuracy",
            self.stop_at_train_accuracy
                .map_or("none".into(), |a| a.to_string()),
        );
        kv("d_model", h.d_model.to_string());
        kv("layers", h.layers.to_string());
        kv("heads", h.heads.to_string());
        kv("ffn_width", h.ffn_width.to_string());
        kv("max_seq_len", h.max_seq_len.to_string());
        kv("vocab_capacity", h.vocab_capacity.to_string());
        kv("rank", h.rank.to_string());
        kv("adapter_heads", h.adapter_heads.to_string());
        kv("gnn_hidden", h.gnn_hidden.to_string());
        s
    }
}
