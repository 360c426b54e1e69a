//! Gradient-boosted regression trees for pinball (quantile) and squared-error
//! losses, written from scratch.
//!
//! ```
//! use hybridcast::gbqr::{fit, Loss, TrainConfig};
//!
//! let x: Vec<Vec<f64>> = (0..400).map(|i| vec![i as f64 / 400.0]).collect();
//! let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.5 { 1.0 } else { 0.0 }).collect();
//! let cfg = TrainConfig {
//!     num_estimators: 20,
//!     min_data_in_leaf: 20,
//!     learning_rate: 1.0,
//!     ..TrainConfig::default()
//! };
//! let model = fit(&x, &y, &["x".to_string()], Loss::pinball(0.5), &cfg).unwrap();
//! assert_eq!(model.predict_row(&[0.9]), 1.0);
//! assert_eq!(model.predict_row(&[0.1]), 0.0);
//! ```

pub mod binning;
pub mod tree;

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataprep::Dataset;
use crate::error::{Error, Result};
use crate::forecast::QuantileForecast;
use crate::metrics::pinball;

pub use binning::{BinMapper, BinnedMatrix};
pub use tree::{empirical_quantile, fit_tree, LeafRule, Node, Tree};

pub const FORMAT: &str = "hybridcast-gbqr";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    Pinball { tau: f64 },
    SquaredError,
}

impl Loss {
    /// Pinball loss at level `tau`.
    pub fn pinball(tau: f64) -> Self {
        Loss::Pinball { tau }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Pinball { tau } if !(tau > 0.0 && tau < 1.0) => {
                Err(Error::InvalidParameter(format!("pinball level {tau} not in (0,1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, y: f64, f: f64) -> f64 {
        match *self {
            Loss::Pinball { tau } => pinball(y, f, tau),
            Loss::SquaredError => 0.5 * (y - f) * (y - f),
        }
    }

    pub fn negative_gradient(&self, y: f64, f: f64) -> f64 {
        match *self {
            Loss::Pinball { tau } => pinball_negative_gradient(y, f, tau),
            Loss::SquaredError => y - f,
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = Error;

    /// `mse` or `pinball:<tau>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("mse") {
            return Ok(Loss::SquaredError);
        }
        let tau = s
            .strip_prefix("pinball:")
            .ok_or_else(|| Error::parse("loss", format!("expected `mse` or `pinball:<tau>`, got `{s}`")))?
            .parse::<f64>()
            .map_err(|e| Error::parse("loss", e.to_string()))?;
        let loss = Loss::Pinball { tau };
        loss.validate()?;
        Ok(loss)
    }
}

impl std::fmt::Display for Loss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Loss::Pinball { tau } => write!(f, "pinball:{tau}"),
            Loss::SquaredError => write!(f, "mse"),
        }
    }
}

/// Subgradient of the pinball loss with respect to the prediction, negated:
/// `τ` below the actual, `−(1 − τ)` above it and `0` exactly at it.
#[inline]
pub fn pinball_negative_gradient(y: f64, f: f64, tau: f64) -> f64 {
    if y > f {
        tau
    } else if y < f {
        -(1.0 - tau)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub num_leaves: usize,
    pub min_data_in_leaf: usize,
    pub num_estimators: usize,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    pub histogram_bins: usize,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_depth: 6,
            num_leaves: 100,
            min_data_in_leaf: 200,
            num_estimators: 500,
            lambda_l1: 0.0,
            lambda_l2: 0.0,
            histogram_bins: 256,
            subsample: 1.0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} not in (0,1]", self.learning_rate));
        }
        if self.max_depth == 0 || self.num_leaves < 2 || self.min_data_in_leaf == 0 {
            return bad("max_depth, min_data_in_leaf must be positive and num_leaves ≥ 2".into());
        }
        if !(2..=u16::MAX as usize).contains(&self.histogram_bins) {
            return bad(format!("histogram_bins {} out of range", self.histogram_bins));
        }
        if self.lambda_l1 < 0.0 || self.lambda_l2 < 0.0 {
            return bad("penalties must be non-negative".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample {} not in (0,1]", self.subsample));
        }
        Ok(())
    }
}

/// `base_score + learning_rate · Σ trees`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub format: String,
    pub version: u32,
    pub loss: Loss,
    pub learning_rate: f64,
    pub base_score: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

impl BoostedModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(r) = rows.iter().find(|r| r.len() != self.feature_names.len()) {
            return Err(Error::SchemaMismatch {
                expected: self.feature_names.clone(),
                found: vec![format!("{} columns", r.len())],
            });
        }
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }

    /// Predict a dataset whose column names must match the training schema.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.columns != self.feature_names {
            return Err(Error::SchemaMismatch {
                expected: self.feature_names.clone(),
                found: ds.columns.clone(),
            });
        }
        self.predict(&ds.features())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        check_format(&model.format, model.version)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::write(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Self::from_json(&s)
    }
}

fn check_format(format: &str, version: u32) -> Result<()> {
    if format != FORMAT || version != FORMAT_VERSION {
        return Err(Error::parse(
            "model file",
            format!("unsupported format {format} v{version}"),
        ));
    }
    Ok(())
}

fn validate_inputs(x: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput("training rows"));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "rows vs targets",
            left: x.len(),
            right: y.len(),
        });
    }
    if let Some(r) = x.iter().find(|r| r.len() != names.len()) {
        return Err(Error::LengthMismatch {
            what: "row width vs feature names",
            left: r.len(),
            right: names.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::UncleanDataset("NaN or infinite value in training data".into()));
    }
    Ok(())
}

// Mean taken around the first value, exact for constant inputs.
fn shifted_mean(y: &[f64]) -> f64 {
    y[0] + y.iter().map(|v| v - y[0]).sum::<f64>() / y.len() as f64
}

fn mean_loss(loss: Loss, y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(&a, &b)| loss.value(a, b)).sum::<f64>() / y.len() as f64
}

/// Fit a boosted model and return the mean training loss before the first
/// tree and after every round.
pub fn fit_traced(
    x: &[Vec<f64>],
    y: &[f64],
    names: &[String],
    loss: Loss,
    cfg: &TrainConfig,
) -> Result<(BoostedModel, Vec<f64>)> {
    loss.validate()?;
    cfg.validate()?;
    validate_inputs(x, y, names)?;

    let n = y.len();
    let base_score = match loss {
        Loss::Pinball { tau } => empirical_quantile(&mut y.to_vec(), tau),
        Loss::SquaredError => shifted_mean(y),
    };
    let data = BinnedMatrix::new(x, cfg.histogram_bins);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let sample_size = ((cfg.subsample * n as f64).round() as usize).max(1);

    let mut f = vec![base_score; n];
    let mut gradients = vec![0.0; n];
    let mut residuals = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.num_estimators);
    let mut history = Vec::with_capacity(cfg.num_estimators + 1);
    history.push(mean_loss(loss, y, &f));

    for _ in 0..cfg.num_estimators {
        for i in 0..n {
            gradients[i] = loss.negative_gradient(y[i], f[i]);
            residuals[i] = y[i] - f[i];
        }
        let rows: Vec<u32> = if sample_size < n {
            let mut idx: Vec<u32> = sample(&mut rng, n, sample_size).into_iter().map(|i| i as u32).collect();
            idx.sort_unstable();
            idx
        } else {
            (0..n as u32).collect()
        };
        let rule = match loss {
            Loss::Pinball { tau } => LeafRule::ResidualQuantile {
                tau,
                residuals: &residuals,
            },
            Loss::SquaredError => LeafRule::MeanGradient,
        };
        let tree = fit_tree(&data, rows, &gradients, rule, cfg);
        for (fi, row) in f.iter_mut().zip(x) {
            *fi += cfg.learning_rate * tree.predict(row);
        }
        trees.push(tree);
        let current = mean_loss(loss, y, &f);
        if !current.is_finite() {
            return Err(Error::Diverged { epoch: trees.len() });
        }
        history.push(current);
    }

    let model = BoostedModel {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        loss,
        learning_rate: cfg.learning_rate,
        base_score,
        feature_names: names.to_vec(),
        trees,
    };
    Ok((model, history))
}

pub fn fit(x: &[Vec<f64>], y: &[f64], names: &[String], loss: Loss, cfg: &TrainConfig) -> Result<BoostedModel> {
    fit_traced(x, y, names, loss, cfg).map(|(m, _)| m)
}

/// Fit on an aligned dataset (every row must carry a target).
pub fn fit_boosted(ds: &Dataset, loss: Loss, cfg: &TrainConfig) -> Result<BoostedModel> {
    let y = ds.targets()?;
    fit(&ds.features(), &y, &ds.columns, loss, cfg)
}

/// Squared-error model, used as the point forecaster for trading.
pub fn fit_mse_oriented(ds: &Dataset, cfg: &TrainConfig) -> Result<BoostedModel> {
    fit_boosted(ds, Loss::SquaredError, cfg)
}

/// One pinball model per quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModelSet {
    pub format: String,
    pub version: u32,
    pub levels: Vec<f64>,
    pub models: Vec<BoostedModel>,
}

impl QuantileModelSet {
    /// Train every level independently (in parallel). Level `i` uses seed
    /// `rng_seed + i` so results do not depend on scheduling.
    pub fn train(x: &[Vec<f64>], y: &[f64], names: &[String], levels: &[f64], cfg: &TrainConfig) -> Result<Self> {
        crate::forecast::validate_levels(levels)?;
        let models = levels
            .par_iter()
            .enumerate()
            .map(|(i, &tau)| {
                let cfg = TrainConfig {
                    rng_seed: cfg.rng_seed.wrapping_add(i as u64),
                    ..cfg.clone()
                };
                fit(x, y, names, Loss::Pinball { tau }, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            levels: levels.to_vec(),
            models,
        })
    }

    pub fn train_dataset(ds: &Dataset, levels: &[f64], cfg: &TrainConfig) -> Result<Self> {
        Self::train(&ds.features(), &ds.targets()?, &ds.columns, levels, cfg)
    }

    pub fn feature_names(&self) -> &[String] {
        self.models.first().map_or(&[], |m| &m.feature_names)
    }

    /// Raw per-level predictions (not rearranged).
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<QuantileForecast>> {
        let per_level: Vec<Vec<f64>> = self
            .models
            .iter()
            .map(|m| m.predict(rows))
            .collect::<Result<_>>()?;
        Ok((0..rows.len())
            .map(|i| QuantileForecast {
                timestamp: None,
                levels: self.levels.clone(),
                values: per_level.iter().map(|p| p[i]).collect(),
            })
            .collect())
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<QuantileForecast>> {
        if ds.columns != self.feature_names() {
            return Err(Error::SchemaMismatch {
                expected: self.feature_names().to_vec(),
                found: ds.columns.clone(),
            });
        }
        let mut out = self.predict(&ds.features())?;
        for (qf, row) in out.iter_mut().zip(&ds.rows) {
            qf.timestamp = Some(row.timestamp);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::write(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let set: Self = serde_json::from_str(&s)?;
        check_format(&set.format, set.version)?;
        Ok(set)
    }
}
