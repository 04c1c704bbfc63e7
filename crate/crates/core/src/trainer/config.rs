use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sampler::WalkConfig;

/// Keys accepted by [`TrainConfig::set`]. Per-type neighbor counts use
/// `neighbors.<TYPE>` in addition to these.
pub const CONFIG_KEYS: &[&str] = &[
    "adam_eps",
    "batch_size",
    "beta1",
    "beta2",
    "disable_inter_attention",
    "disable_intra_attention",
    "embed_dim",
    "freeze_projections",
    "leaky_slope",
    "learning_rate",
    "max_epochs",
    "negatives",
    "neighbors",
    "patience",
    "restart_prob",
    "seed",
    "val_fraction",
    "walk_length",
    "walks_per_node",
    "window",
];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub leaky_slope: f64,
    pub disable_intra_attention: bool,
    pub disable_inter_attention: bool,
    pub freeze_projections: bool,
    /// Share of each MPU's triples held out for early stopping.
    pub val_fraction: f64,
    pub walk: WalkConfig,
    /// Node type label → number of neighbors kept.
    pub neighbors_per_type: BTreeMap<String, usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 20,
            batch_size: 512,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            leaky_slope: crate::autodiff::DEFAULT_LEAKY_SLOPE,
            disable_intra_attention: false,
            disable_inter_attention: false,
            freeze_projections: false,
            val_fraction: 0.05,
            walk: WalkConfig::default(),
            neighbors_per_type: BTreeMap::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.embed_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("embed_dim must be even, got {}", self.embed_dim)));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be ≥ 0, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0,1), got {b}")));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must lie in [0,1), got {}",
                self.val_fraction
            )));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!(
                "leaky_slope must lie in [0,1), got {}",
                self.leaky_slope
            )));
        }
        if self.neighbors_per_type.values().any(|&k| k == 0) {
            return Err(Error::Config("per-type neighbor count must be at least 1".into()));
        }
        self.walk.validate()
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "disable_inter_attention" => self.disable_inter_attention = parse(key, value)?,
            "disable_intra_attention" => self.disable_intra_attention = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "freeze_projections" => self.freeze_projections = parse(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "negatives" => self.walk.negatives = parse(key, value)?,
            "neighbors" => self.walk.default_k = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "restart_prob" => self.walk.restart_prob = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "walk_length" => self.walk.walk_length = parse(key, value)?,
            "walks_per_node" => self.walk.walks_per_node = parse(key, value)?,
            "window" => self.walk.window = parse(key, value)?,
            other => match other.strip_prefix("neighbors.") {
                Some(label) if !label.is_empty() => {
                    self.neighbors_per_type.insert(label.to_string(), parse(key, value)?);
                }
                _ => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
            },
        }
        Ok(())
    }

    /// Every setting as sorted `key = value` pairs.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vec![
            ("adam_eps".into(), format!("{:?}", self.adam_eps)),
            ("batch_size".into(), self.batch_size.to_string()),
            ("beta1".into(), format!("{:?}", self.beta1)),
            ("beta2".into(), format!("{:?}", self.beta2)),
            (
                "disable_inter_attention".into(),
                self.disable_inter_attention.to_string(),
            ),
            (
                "disable_intra_attention".into(),
                self.disable_intra_attention.to_string(),
            ),
            ("embed_dim".into(), self.embed_dim.to_string()),
            ("freeze_projections".into(), self.freeze_projections.to_string()),
            ("leaky_slope".into(), format!("{:?}", self.leaky_slope)),
            ("learning_rate".into(), format!("{:?}", self.learning_rate)),
            ("max_epochs".into(), self.max_epochs.to_string()),
            ("negatives".into(), self.walk.negatives.to_string()),
            ("neighbors".into(), self.walk.default_k.to_string()),
            ("patience".into(), self.patience.to_string()),
            ("restart_prob".into(), format!("{:?}", self.walk.restart_prob)),
            ("seed".into(), self.seed.to_string()),
            ("val_fraction".into(), format!("{:?}", self.val_fraction)),
            ("walk_length".into(), self.walk.walk_length.to_string()),
            ("walks_per_node".into(), self.walk.walks_per_node.to_string()),
            ("window".into(), self.walk.window.to_string()),
        ];
        for (label, k) in &self.neighbors_per_type {
            out.push((format!("neighbors.{label}"), k.to_string()));
        }
        out.sort();
        out
    }

    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Parses the output of [`Self::canonical`] (or any `key = value` text).
    pub fn from_canonical(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key = value, got {line:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
