//! Run configuration: flat `key = value` files layered under command-line
//! overrides. Precedence is CLI over file over defaults.
//!
//! Recognised keys: `corpus`, `scores`, `validation`, `tau`, `recall_floor`,
//! `fraction`, `ks` (comma list), `out`, `seed`, `threads`, `plots`.
//! Dashes and underscores are interchangeable in keys. `#` starts a comment.
//! Relative paths in a file resolve against the file's directory.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::calibration::DEFAULT_RECALL_FLOOR;
use crate::cascade::DEFAULT_KS;
use crate::cohort::DEFAULT_FRACTION;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("config line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for {key}: {value:?} ({reason})")]
    Value { key: &'static str, value: String, reason: String },
    #[error("missing required setting: {0}")]
    Missing(&'static str),
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
}

/// One configuration source. Unset fields defer to lower layers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigLayer {
    pub corpus: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub tau: Option<f64>,
    pub recall_floor: Option<f64>,
    pub fraction: Option<f64>,
    pub ks: Option<Vec<u32>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub plots: Option<bool>,
}

impl ConfigLayer {
    /// Fields set in `over` win.
    pub fn overlay(self, over: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            corpus: over.corpus.or(self.corpus),
            scores: over.scores.or(self.scores),
            validation: over.validation.or(self.validation),
            tau: over.tau.or(self.tau),
            recall_floor: over.recall_floor.or(self.recall_floor),
            fraction: over.fraction.or(self.fraction),
            ks: over.ks.or(self.ks),
            out: over.out.or(self.out),
            seed: over.seed.or(self.seed),
            threads: over.threads.or(self.threads),
            plots: over.plots.or(self.plots),
        }
    }

    pub fn parse(text: &str, base: Option<&Path>) -> Result<ConfigLayer, ConfigError> {
        let mut layer = ConfigLayer::default();
        let path = |v: &str| match base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim().replace('-', "_"), value.trim());
            match key.as_str() {
                "corpus" => layer.corpus = Some(path(value)),
                "scores" => layer.scores = Some(path(value)),
                "validation" => layer.validation = Some(path(value)),
                "out" => layer.out = Some(path(value)),
                "tau" => layer.tau = Some(parse_num("tau", value)?),
                "recall_floor" => layer.recall_floor = Some(parse_num("recall_floor", value)?),
                "fraction" => layer.fraction = Some(parse_num("fraction", value)?),
                "ks" => layer.ks = Some(parse_ks(value)?),
                "seed" => layer.seed = Some(parse_num("seed", value)?),
                "threads" => layer.threads = Some(parse_num("threads", value)?),
                "plots" => layer.plots = Some(parse_num("plots", value)?),
                _ => return Err(ConfigError::UnknownKey { line: i + 1, key }),
            }
        }
        Ok(layer)
    }

    pub fn load(path: &Path) -> Result<ConfigLayer, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        ConfigLayer::parse(&text, path.parent())
    }
}

fn parse_num<T: std::str::FromStr>(key: &'static str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key,
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

/// Parses `"1, 2,5"`; duplicates are removed and the list sorted.
pub fn parse_ks(value: &str) -> Result<Vec<u32>, ConfigError> {
    let mut ks = value
        .split(',')
        .map(|s| parse_num::<u32>("ks", s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(ConfigError::Value {
            key: "ks",
            value: value.to_owned(),
            reason: "need one or more positive integers".into(),
        });
    }
    Ok(ks)
}

/// Fully resolved settings for a pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    /// Without a score file the built-in baseline scorers are used.
    pub scores: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    /// Fixed threshold; skips calibration when set.
    pub tau: Option<f64>,
    pub recall_floor: f64,
    pub fraction: f64,
    pub ks: Vec<u32>,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub plots: bool,
}

impl RunConfig {
    pub fn resolve(layer: ConfigLayer) -> Result<RunConfig, ConfigError> {
        let cfg = RunConfig {
            corpus: layer.corpus.ok_or(ConfigError::Missing("corpus"))?,
            scores: layer.scores,
            validation: layer.validation,
            tau: layer.tau,
            recall_floor: layer.recall_floor.unwrap_or(DEFAULT_RECALL_FLOOR),
            fraction: layer.fraction.unwrap_or(DEFAULT_FRACTION),
            ks: layer.ks.unwrap_or_else(|| DEFAULT_KS.to_vec()),
            out: layer.out.unwrap_or_else(|| PathBuf::from("out")),
            seed: layer.seed.unwrap_or(0),
            threads: layer.threads,
            plots: layer.plots.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key, value: String, reason: &str| {
            Err(ConfigError::Value {
                key,
                value,
                reason: reason.into(),
            })
        };
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                return bad("tau", t.to_string(), "must lie in [0, 1]");
            }
        } else if self.validation.is_none() {
            return Err(ConfigError::Missing("tau or validation"));
        }
        if !(self.recall_floor > 0.0 && self.recall_floor <= 1.0) {
            return bad("recall_floor", self.recall_floor.to_string(), "must lie in (0, 1]");
        }
        if !(self.fraction > 0.0 && self.fraction <= 0.5) {
            return bad("fraction", self.fraction.to_string(), "must lie in (0, 0.5]");
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("ks", format!("{:?}", self.ks), "need one or more positive integers");
        }
        if self.threads == Some(0) {
            return bad("threads", "0".into(), "must be at least 1");
        }
        Ok(())
    }
}
