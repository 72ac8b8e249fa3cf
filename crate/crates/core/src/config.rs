//! Run configuration: one JSON document with a section per module, dotted
//! `key=value` overrides and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analytic::DEFAULT_LAMBDA;
use crate::annotations::{AggregateOptions, AlphaMetric, DEFAULT_RELAXED_THRESHOLD};
use crate::error::{Error, Result};
use crate::grid::ScoreGrid;
use crate::oracle::VerifyConfig;
use crate::rewards::RewardSpec;
use crate::synth::SynthConfig;
use crate::trainer::{GrpoConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsoSection {
    pub lambda: f64,
}

impl Default for AsoSection {
    fn default() -> Self {
        AsoSection { lambda: DEFAULT_LAMBDA }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotationSection {
    pub min_raters: usize,
    pub var_threshold: f64,
    pub relaxed_threshold: f64,
    pub alpha_metric: AlphaMetric,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        let agg = AggregateOptions::default();
        AnnotationSection {
            min_raters: agg.min_raters,
            var_threshold: agg.var_threshold,
            relaxed_threshold: DEFAULT_RELAXED_THRESHOLD,
            alpha_metric: AlphaMetric::default(),
        }
    }
}

impl AnnotationSection {
    pub fn aggregate_options(&self) -> AggregateOptions {
        AggregateOptions {
            min_raters: self.min_raters,
            var_threshold: self.var_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Share of labelled items held out of training for prediction.
    pub holdout_fraction: f64,
    /// Fixed so every method and training seed sees the same split.
    pub split_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            holdout_fraction: 0.2,
            split_seed: 0,
        }
    }
}

/// Input file locations. Relative paths resolve against the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub features: PathBuf,
    pub annotations: PathBuf,
    pub labels: PathBuf,
    pub predictions: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            features: "features.jsonl".into(),
            annotations: "annotations.jsonl".into(),
            labels: "labels.jsonl".into(),
            predictions: "predictions_aso.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: ScoreGrid,
    pub reward: RewardSpec,
    pub aso: AsoSection,
    pub grpo: GrpoConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub annotations: AnnotationSection,
    pub eval: EvalSection,
    pub verify: VerifyConfig,
    pub paths: PathsSection,
}

/// Sets `doc[a][b]... = value` for the dotted `key`, creating objects on the way.
fn set_dotted(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            _ => {
                return Err(Error::Config(format!(
                    "override `{key}`: `{}` is not a section",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// Parses `key=value`; the value is read as JSON when possible, else as a string.
pub fn parse_override(arg: &str) -> Result<(String, Value)> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{arg}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

impl RunConfig {
    /// Builds a config from an optional JSON document, `key=value` overrides
    /// and an optional seed applied to every seeded section.
    pub fn resolve(doc: Option<Value>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut doc = doc.unwrap_or_else(|| Value::Object(Map::new()));
        if !doc.is_object() {
            return Err(Error::Config("config document must be a JSON object".into()));
        }
        for arg in overrides {
            let (key, value) = parse_override(arg)?;
            set_dotted(&mut doc, &key, value)?;
        }
        let mut config: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
            Error::Config(format!("`{}`: {}", e.path(), e.inner()))
        })?;
        if let Some(seed) = seed {
            config.train.seed = seed;
            config.synth.seed = seed;
            config.verify.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Some(serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: p.to_path_buf(),
                    line: e.line(),
                    message: e.to_string(),
                })?)
            }
            None => None,
        };
        Self::resolve(doc, overrides, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let untouched = TrainConfig::default();
        for (set, key, home) in [
            (self.train.lambda != untouched.lambda, "train.lambda", "aso.lambda"),
            (self.train.grpo != untouched.grpo, "train.grpo", "grpo"),
            (self.train.reward != untouched.reward, "train.reward", "reward"),
        ] {
            if set {
                return Err(Error::Config(format!("`{key}` is not read; set `{home}` instead")));
            }
        }
        self.train_config().validate()?;
        self.synth.validate()?;
        self.verify.validate()?;
        if !(self.aso.lambda.is_finite() && self.aso.lambda > 0.0) {
            return Err(Error::Config("aso.lambda must be > 0".into()));
        }
        let a = &self.annotations;
        if a.min_raters == 0 {
            return Err(Error::Config("annotations.min_raters must be >= 1".into()));
        }
        if !(a.var_threshold >= 0.0) || !(a.relaxed_threshold >= 0.0) {
            return Err(Error::Config("annotation thresholds must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.eval.holdout_fraction) {
            return Err(Error::Config("eval.holdout_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Trainer settings with the ASO, GRPO and reward sections folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.aso.lambda,
            grpo: self.grpo,
            reward: self.reward,
            ..self.train.clone()
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
