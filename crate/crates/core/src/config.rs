//! Engine configuration.
//!
//! The on-disk form is a flat `key = value` file. Blank lines and lines
//! starting with `#` are ignored; unknown keys are rejected. Layer weights use
//! dotted keys such as `layer_weights.constraint.logic = 1.5`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MemoryError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryType {
    Factual,
    Constraint,
    Character,
}

impl QueryType {
    pub const ALL: [QueryType; 3] = [QueryType::Factual, QueryType::Constraint, QueryType::Character];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::Factual => "factual",
            QueryType::Constraint => "constraint",
            QueryType::Character => "character",
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryType {
    type Err = MemoryError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factual" => Ok(QueryType::Factual),
            "constraint" => Ok(QueryType::Constraint),
            "character" => Ok(QueryType::Character),
            other => Err(MemoryError::Config(format!("unknown query type `{other}`"))),
        }
    }
}

/// Memory layer, in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Episodic,
    Semantic,
    Logic,
}

impl Layer {
    fn key(self) -> &'static str {
        match self {
            Layer::Episodic => "epi",
            Layer::Semantic => "sem",
            Layer::Logic => "logic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMultipliers {
    pub episodic: f64,
    pub semantic: f64,
    pub logic: f64,
}

impl LayerMultipliers {
    pub fn get(&self, layer: Layer) -> f64 {
        match layer {
            Layer::Episodic => self.episodic,
            Layer::Semantic => self.semantic,
            Layer::Logic => self.logic,
        }
    }

    fn get_mut(&mut self, layer: Layer) -> &mut f64 {
        match layer {
            Layer::Episodic => &mut self.episodic,
            Layer::Semantic => &mut self.semantic,
            Layer::Logic => &mut self.logic,
        }
    }
}

/// Stage-II re-ranking multipliers per query type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub factual: LayerMultipliers,
    pub constraint: LayerMultipliers,
    pub character: LayerMultipliers,
}

impl LayerWeights {
    pub fn for_type(&self, t: QueryType) -> &LayerMultipliers {
        match t {
            QueryType::Factual => &self.factual,
            QueryType::Constraint => &self.constraint,
            QueryType::Character => &self.character,
        }
    }

    fn for_type_mut(&mut self, t: QueryType) -> &mut LayerMultipliers {
        match t {
            QueryType::Factual => &mut self.factual,
            QueryType::Constraint => &mut self.constraint,
            QueryType::Character => &mut self.character,
        }
    }
}

impl Default for LayerWeights {
    fn default() -> Self {
        LayerWeights {
            factual: LayerMultipliers { episodic: 1.0, semantic: 1.0, logic: 0.6 },
            constraint: LayerMultipliers { episodic: 1.0, semantic: 1.0, logic: 1.5 },
            character: LayerMultipliers { episodic: 1.0, semantic: 1.2, logic: 1.5 },
        }
    }
}

/// Verb lexicon used when no `action_verbs` key is given.
pub const DEFAULT_ACTION_VERBS: &[&str] = &[
    "add", "assemble", "bake", "blanch", "boil", "build", "chop", "clean", "close", "cook", "cut",
    "drill", "fold", "fry", "grab", "heat", "install", "mix", "open", "peel", "pick", "place",
    "pour", "put", "rinse", "screw", "serve", "slice", "stir", "take", "wash", "wipe",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub dim: usize,
    pub alpha: f64,
    pub beta_ema: f64,
    pub tau_verify: f64,
    pub delta_gate: f64,
    pub sigma_support: f64,
    pub theta_retrieve: f64,
    pub tau_pos: f64,
    pub tau_neg: f64,
    pub tau_align: f64,
    pub tau_anchor: f64,
    pub layer_weights: LayerWeights,
    pub pool_trigger: usize,
    pub max_path_len: usize,
    pub max_paths: usize,
    pub action_verbs: Vec<String>,
    /// `default` or `external`.
    pub verifier: String,
    /// `default` or `external`.
    pub goal_namer: String,
    /// `rules` or `external`.
    pub classifier: String,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dim: 512,
            alpha: 0.3,
            beta_ema: 0.9,
            tau_verify: 0.25,
            delta_gate: 0.5,
            sigma_support: 0.3,
            theta_retrieve: 0.2,
            tau_pos: 0.85,
            tau_neg: 0.3,
            tau_align: 0.8,
            tau_anchor: 0.75,
            layer_weights: LayerWeights::default(),
            pool_trigger: 5,
            max_path_len: 64,
            max_paths: 10_000,
            action_verbs: DEFAULT_ACTION_VERBS.iter().map(|s| s.to_string()).collect(),
            verifier: "default".into(),
            goal_namer: "default".into(),
            classifier: "rules".into(),
        }
    }
}

fn in_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(MemoryError::Config(format!("{name} = {v} is outside [{lo}, {hi}]")))
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(MemoryError::Config("dim must be positive".into()));
        }
        in_range("alpha", self.alpha, 0.0, 1.0)?;
        in_range("beta_ema", self.beta_ema, 0.0, 1.0)?;
        in_range("tau_verify", self.tau_verify, 0.0, 1.0)?;
        in_range("delta_gate", self.delta_gate, -1.0, 1.0)?;
        if !(self.sigma_support > 0.0 && self.sigma_support <= 1.0) {
            return Err(MemoryError::Config(format!(
                "sigma_support = {} is outside (0, 1]",
                self.sigma_support
            )));
        }
        in_range("theta_retrieve", self.theta_retrieve, -1.0, 1.0)?;
        in_range("tau_pos", self.tau_pos, -1.0, 1.0)?;
        in_range("tau_neg", self.tau_neg, -1.0, 1.0)?;
        if self.tau_neg > self.tau_pos {
            return Err(MemoryError::Config("tau_neg must not exceed tau_pos".into()));
        }
        in_range("tau_align", self.tau_align, -1.0, 1.0)?;
        in_range("tau_anchor", self.tau_anchor, -1.0, 1.0)?;
        for t in QueryType::ALL {
            let m = self.layer_weights.for_type(t);
            for l in [Layer::Episodic, Layer::Semantic, Layer::Logic] {
                in_range(&format!("layer_weights.{t}.{}", l.key()), m.get(l), 0.0, f64::MAX)?;
            }
        }
        for (name, v) in [
            ("pool_trigger", self.pool_trigger),
            ("max_path_len", self.max_path_len),
            ("max_paths", self.max_paths),
        ] {
            if v == 0 {
                return Err(MemoryError::Config(format!("{name} must be positive")));
            }
        }
        for (name, v, allowed) in [
            ("verifier", &self.verifier, &["default", "external"][..]),
            ("goal_namer", &self.goal_namer, &["default", "external"][..]),
            ("classifier", &self.classifier, &["rules", "external"][..]),
        ] {
            if !allowed.contains(&v.as_str()) {
                return Err(MemoryError::Config(format!("{name} must be one of {allowed:?}, got `{v}`")));
            }
        }
        if self.action_verbs.iter().any(|v| v.is_empty()) {
            return Err(MemoryError::Config("action_verbs contains an empty verb".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    /// Renders the config in the key-value format accepted by [`Config::load`].
    pub fn to_kv(&self) -> String {
        let mut out = format!("version = {CONFIG_VERSION}\n");
        let scalars: [(&str, String); 15] = [
            ("dim", self.dim.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta_ema", self.beta_ema.to_string()),
            ("tau_verify", self.tau_verify.to_string()),
            ("delta_gate", self.delta_gate.to_string()),
            ("sigma_support", self.sigma_support.to_string()),
            ("theta_retrieve", self.theta_retrieve.to_string()),
            ("tau_pos", self.tau_pos.to_string()),
            ("tau_neg", self.tau_neg.to_string()),
            ("tau_align", self.tau_align.to_string()),
            ("tau_anchor", self.tau_anchor.to_string()),
            ("pool_trigger", self.pool_trigger.to_string()),
            ("max_path_len", self.max_path_len.to_string()),
            ("max_paths", self.max_paths.to_string()),
            ("action_verbs", self.action_verbs.join(",")),
        ];
        for (k, v) in scalars {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for t in QueryType::ALL {
            let m = self.layer_weights.for_type(t);
            for l in [Layer::Episodic, Layer::Semantic, Layer::Logic] {
                out.push_str(&format!("layer_weights.{t}.{} = {}\n", l.key(), m.get(l)));
            }
        }
        out.push_str(&format!("verifier = {}\n", self.verifier));
        out.push_str(&format!("goal_namer = {}\n", self.goal_namer));
        out.push_str(&format!("classifier = {}\n", self.classifier));
        out
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn real(key: &str, v: &str) -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| MemoryError::Config(format!("{key}: `{v}` is not a real number")))
        }
        fn int(key: &str, v: &str) -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| MemoryError::Config(format!("{key}: `{v}` is not a non-negative integer")))
        }
        match key {
            "version" => {
                if int(key, value)? != CONFIG_VERSION as usize {
                    return Err(MemoryError::Config(format!("unsupported config version {value}")));
                }
            }
            "dim" => self.dim = int(key, value)?,
            "alpha" => self.alpha = real(key, value)?,
            "beta_ema" => self.beta_ema = real(key, value)?,
            "tau_verify" => self.tau_verify = real(key, value)?,
            "delta_gate" => self.delta_gate = real(key, value)?,
            "sigma_support" => self.sigma_support = real(key, value)?,
            "theta_retrieve" => self.theta_retrieve = real(key, value)?,
            "tau_pos" => self.tau_pos = real(key, value)?,
            "tau_neg" => self.tau_neg = real(key, value)?,
            "tau_align" => self.tau_align = real(key, value)?,
            "tau_anchor" => self.tau_anchor = real(key, value)?,
            "pool_trigger" => self.pool_trigger = int(key, value)?,
            "max_path_len" => self.max_path_len = int(key, value)?,
            "max_paths" => self.max_paths = int(key, value)?,
            "action_verbs" => {
                self.action_verbs = value
                    .split(',')
                    .map(|v| v.trim().to_lowercase())
                    .filter(|v| !v.is_empty())
                    .collect()
            }
            "verifier" => self.verifier = value.to_string(),
            "goal_namer" => self.goal_namer = value.to_string(),
            "classifier" => self.classifier = value.to_string(),
            _ => {
                let parts: Vec<&str> = key.split('.').collect();
                let [head, qtype, layer] = parts[..] else {
                    return Err(MemoryError::Config(format!("unknown key `{key}`")));
                };
                if head != "layer_weights" {
                    return Err(MemoryError::Config(format!("unknown key `{key}`")));
                }
                let qtype: QueryType = qtype
                    .parse()
                    .map_err(|_| MemoryError::Config(format!("unknown key `{key}`")))?;
                let layer = match layer {
                    "epi" => Layer::Episodic,
                    "sem" => Layer::Semantic,
                    "logic" => Layer::Logic,
                    _ => return Err(MemoryError::Config(format!("unknown key `{key}`"))),
                };
                *self.layer_weights.for_type_mut(qtype).get_mut(layer) = real(key, value)?;
            }
        }
        Ok(())
    }
}

impl FromStr for Config {
    type Err = MemoryError;

    fn from_str(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(MemoryError::Config(format!(
                    "line {}: expected `key = value`",
                    lineno + 1
                )));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
