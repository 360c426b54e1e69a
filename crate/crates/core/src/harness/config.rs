//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is listed
//! in [`KEYS`]; anything else is rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{desk_levels, parse_levels};
use crate::gbqr::TrainConfig;
use crate::trading::strategy::Strategy;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "registered synthetic scenario to generate (default smoke)"),
    ("days", "override the scenario length in days"),
    ("seed", "seed for data generation and every model (default 0)"),
    ("data_dir", "read datasets written by `hybridcast synth` instead of generating"),
    ("out_dir", "directory for reports and the manifest (default pipeline-out)"),
    ("wind_capacity", "wind capacity per half-hour in MWh (required with data_dir)"),
    ("solar_capacity", "solar capacity per half-hour in MWh (required with data_dir)"),
    ("levels", "component quantile levels: desk, dense or a comma list (default desk)"),
    ("train_fraction", "share of days used for training, the rest is evaluated (default 0.5)"),
    ("learning_rate", "boosting learning rate (default 0.05)"),
    ("max_depth", "maximum tree depth (default 4)"),
    ("num_leaves", "maximum leaves per tree (default 16)"),
    ("min_data_in_leaf", "minimum rows per leaf (default 20)"),
    ("num_estimators", "boosting rounds (default 150)"),
    ("lambda_l1", "L1 leaf penalty (default 0)"),
    ("lambda_l2", "L2 leaf penalty (default 0)"),
    ("histogram_bins", "feature histogram bins (default 64)"),
    ("subsample", "row subsampling fraction per tree (default 1)"),
    ("stacking_iterations", "subgradient iterations per stacking level (default 5000)"),
    ("postproc", "apply online solar post-processing: true or false (default true)"),
    ("strategies", "comma list of backtest strategies (default all)"),
    ("backtest_window_days", "trailing spread window in days (default 60)"),
    ("e2e_hidden", "hidden units of the error-shaping network (default 32)"),
    ("e2e_epochs", "training epochs of the error-shaping network (default 300)"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scenario: String,
    pub days: Option<usize>,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub wind_capacity: Option<f64>,
    pub solar_capacity: Option<f64>,
    pub levels: Vec<f64>,
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub stacking_iterations: usize,
    pub postproc: bool,
    pub strategies: Vec<Strategy>,
    pub backtest_window_days: usize,
    pub e2e_hidden: usize,
    pub e2e_epochs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scenario: "smoke".into(),
            days: None,
            seed: 0,
            data_dir: None,
            out_dir: PathBuf::from("pipeline-out"),
            wind_capacity: None,
            solar_capacity: None,
            levels: desk_levels(),
            train_fraction: 0.5,
            train: TrainConfig {
                learning_rate: 0.05,
                max_depth: 4,
                num_leaves: 16,
                min_data_in_leaf: 20,
                num_estimators: 150,
                histogram_bins: 64,
                ..TrainConfig::default()
            },
            stacking_iterations: 5000,
            postproc: true,
            strategies: Strategy::ALL.to_vec(),
            backtest_window_days: 60,
            e2e_hidden: 32,
            e2e_epochs: 300,
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::parse(format!("config key `{key}`"), format!("`{v}`: {e}")))
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("config line {}", lineno + 1), "expected `key = value`"))?;
            let (key, v) = (key.trim(), v.trim());
            match key {
                "scenario" => cfg.scenario = v.to_string(),
                "days" => cfg.days = Some(value(key, v)?),
                "seed" => cfg.seed = value(key, v)?,
                "data_dir" => cfg.data_dir = Some(PathBuf::from(v)),
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                "wind_capacity" => cfg.wind_capacity = Some(value(key, v)?),
                "solar_capacity" => cfg.solar_capacity = Some(value(key, v)?),
                "levels" => cfg.levels = parse_levels(v)?,
                "train_fraction" => cfg.train_fraction = value(key, v)?,
                "learning_rate" => cfg.train.learning_rate = value(key, v)?,
                "max_depth" => cfg.train.max_depth = value(key, v)?,
                "num_leaves" => cfg.train.num_leaves = value(key, v)?,
                "min_data_in_leaf" => cfg.train.min_data_in_leaf = value(key, v)?,
                "num_estimators" => cfg.train.num_estimators = value(key, v)?,
                "lambda_l1" => cfg.train.lambda_l1 = value(key, v)?,
                "lambda_l2" => cfg.train.lambda_l2 = value(key, v)?,
                "histogram_bins" => cfg.train.histogram_bins = value(key, v)?,
                "subsample" => cfg.train.subsample = value(key, v)?,
                "stacking_iterations" => cfg.stacking_iterations = value(key, v)?,
                "postproc" => cfg.postproc = value(key, v)?,
                "strategies" => cfg.strategies = Strategy::parse_list(v)?,
                "backtest_window_days" => cfg.backtest_window_days = value(key, v)?,
                "e2e_hidden" => cfg.e2e_hidden = value(key, v)?,
                "e2e_epochs" => cfg.e2e_epochs = value(key, v)?,
                other => return Err(Error::UnknownConfigKey(other.to_string())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter("train_fraction must lie in (0, 1)".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidParameter("at least one strategy is required".into()));
        }
        if self.data_dir.is_some() && (self.wind_capacity.is_none() || self.solar_capacity.is_none()) {
            return Err(Error::InvalidParameter(
                "data_dir needs wind_capacity and solar_capacity".into(),
            ));
        }
        self.train.validate()
    }

    /// Usage text listing every key.
    pub fn help() -> String {
        let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        KEYS.iter()
            .map(|(k, d)| format!("  {k:<width$}  {d}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let c = PipelineConfig::parse("# demo\nscenario = gaussian\nseed=7\nlevels = 0.1,0.5,0.9\npostproc = false\n")
            .unwrap();
        assert_eq!(c.scenario, "gaussian");
        assert_eq!(c.seed, 7);
        assert_eq!(c.levels, vec![0.1, 0.5, 0.9]);
        assert!(!c.postproc);
        assert!(matches!(
            PipelineConfig::parse("colour = blue"),
            Err(Error::UnknownConfigKey(k)) if k == "colour"
        ));
        assert!(PipelineConfig::parse("seed").is_err());
        assert!(PipelineConfig::parse("seed = -1").is_err());
    }

    #[test]
    fn every_key_is_documented_and_parsed() {
        for (k, _) in KEYS {
            let sample = match *k {
                "scenario" => "smoke",
                "data_dir" | "out_dir" => "x",
                "levels" => "desk",
                "postproc" => "true",
                "strategies" => "q50",
                "learning_rate" | "train_fraction" | "subsample" => "0.5",
                _ => "64",
            };
            let mut text = format!("{k} = {sample}\n");
            if *k == "data_dir" {
                text.push_str("wind_capacity = 1\nsolar_capacity = 1\n");
            }
            PipelineConfig::parse(&text).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }
}
