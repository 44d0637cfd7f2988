//! Flat TOML run configuration. Command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use memechain_core::{ChainFeed, FeatureMode, Metric, PipelineConfig, TrainConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub taxonomy: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub features: Option<String>,
    pub sharpen: Option<bool>,
    pub augment: Option<bool>,
    pub order: Option<Vec<usize>>,
    pub chain_feed: Option<String>,
    pub l2: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub split_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub metric: Option<String>,
}

/// Marks an error as a usage problem (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, name: &str) -> anyhow::Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| usage(format!("missing `{name}` (flag or config key)")))
    }

    pub fn split_fraction(&self) -> anyhow::Result<f64> {
        let f = self.split_fraction.unwrap_or(0.1);
        if !(f > 0.0 && f < 1.0) {
            return Err(usage(format!("split fraction must be in (0, 1), got {f}")));
        }
        Ok(f)
    }

    pub fn pipeline(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(f) = &self.features {
            cfg.mode = parse::<FeatureMode>(f, "features")?;
        }
        if let Some(s) = self.sharpen {
            cfg.sharpen = s;
        }
        if let Some(a) = self.augment {
            cfg.augment = a;
        }
        cfg.order = self.order.clone();
        if let Some(f) = &self.chain_feed {
            cfg.feed = parse::<ChainFeed>(f, "chain_feed")?;
        }
        if let Some(m) = &self.metric {
            cfg.metric = parse::<Metric>(m, "metric")?;
        }
        let defaults = TrainConfig::default();
        cfg.train = TrainConfig {
            l2_strength: self.l2.unwrap_or(defaults.l2_strength),
            max_iterations: self.max_iterations.unwrap_or(defaults.max_iterations),
            gradient_tolerance: self.tolerance.unwrap_or(defaults.gradient_tolerance),
        };
        if let Err(e) = cfg.train.validate() {
            bail!(usage(e.to_string()));
        }
        Ok(cfg)
    }
}

fn parse<T>(value: &str, key: &str) -> anyhow::Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| usage(format!("invalid {key} `{value}`: {e}")))
}
