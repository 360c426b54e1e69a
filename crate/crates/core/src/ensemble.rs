//! Stacking of sister quantile models and capacity-aware truncation.
//!
//! Two weather sources give two forecasts per level. For each level an affine
//! combination `w_a·p_a + w_b·p_b + c` is fitted under pinball loss. Wind
//! forecasts are then capped at `c_τ·Q`, where `Q` is the currently available
//! capacity and `c_τ` is tuned on recent data.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::QuantileForecast;
use crate::metrics::pinball;

/// Settings for the stacking solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackingConfig {
    pub iterations: usize,
    /// Box for both source weights.
    pub weight_bounds: (f64, f64),
    /// Bound on the intercept in units of the data scale.
    pub intercept_bound: f64,
}

impl Default for StackingConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            weight_bounds: (-1.0, 2.0),
            intercept_bound: 1.0,
        }
    }
}

/// Per-level affine combination weights `(w_a, w_b, intercept)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingCombiner {
    pub levels: Vec<f64>,
    pub weights: Vec<[f64; 3]>,
}

fn mean_pinball(a: &[f64], b: &[f64], y: &[f64], w: [f64; 3], tau: f64) -> f64 {
    a.iter()
        .zip(b)
        .zip(y)
        .map(|((&pa, &pb), &yi)| pinball(yi, w[0] * pa + w[1] * pb + w[2], tau))
        .sum::<f64>()
        / y.len() as f64
}

/// Fit one level by averaged projected subgradient descent.
///
/// Inputs are divided by a common scale so that the step size `1/√k` is
/// meaningful. The returned point is the best, by exact objective, among the
/// averaged iterate, the best iterate seen, the warm start `(½, ½, 0)` and
/// the two single-source solutions, so it never loses to either source alone.
pub fn fit_stacking_level(a: &[f64], b: &[f64], y: &[f64], tau: f64, cfg: &StackingConfig) -> Result<[f64; 3]> {
    if a.len() != y.len() || b.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "stacking inputs",
            left: a.len().min(b.len()),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("stacking training set"));
    }
    let mean_abs = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    let scale = mean_abs(y).max(mean_abs(a)).max(mean_abs(b));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let an: Vec<f64> = a.iter().map(|v| v / scale).collect();
    let bn: Vec<f64> = b.iter().map(|v| v / scale).collect();
    let yn: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let n = y.len() as f64;

    let (lo, hi) = cfg.weight_bounds;
    let project = |w: [f64; 3]| {
        [
            w[0].clamp(lo, hi),
            w[1].clamp(lo, hi),
            w[2].clamp(-cfg.intercept_bound, cfg.intercept_bound),
        ]
    };

    let warm = [0.5, 0.5, 0.0];
    let mut w = warm;
    let mut avg = [0.0; 3];
    let mut best = (f64::INFINITY, warm);
    for k in 1..=cfg.iterations {
        let mut grad = [0.0; 3];
        let mut obj = 0.0;
        for i in 0..yn.len() {
            let pred = w[0] * an[i] + w[1] * bn[i] + w[2];
            let r = yn[i] - pred;
            let g = if r > 0.0 {
                obj += tau * r;
                -tau
            } else if r < 0.0 {
                obj -= (1.0 - tau) * r;
                1.0 - tau
            } else {
                0.0
            };
            grad[0] += g * an[i];
            grad[1] += g * bn[i];
            grad[2] += g;
        }
        if obj / n < best.0 {
            best = (obj / n, w);
        }
        let step = 1.0 / (k as f64).sqrt();
        w = project([
            w[0] - step * grad[0] / n,
            w[1] - step * grad[1] / n,
            w[2] - step * grad[2] / n,
        ]);
        for j in 0..3 {
            avg[j] += (w[j] - avg[j]) / k as f64;
        }
    }

    let candidates = [avg, best.1, warm, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let chosen = candidates
        .iter()
        .map(|&c| (mean_pinball(&an, &bn, &yn, c, tau), c))
        .fold((f64::INFINITY, warm), |acc, cur| if cur.0 < acc.0 { cur } else { acc })
        .1;
    Ok([chosen[0], chosen[1], chosen[2] * scale])
}

/// Fit a combiner on aligned per-period, per-level predictions.
pub fn fit_stacking(
    base_a: &[Vec<f64>],
    base_b: &[Vec<f64>],
    actual: &[f64],
    levels: &[f64],
    cfg: &StackingConfig,
) -> Result<StackingCombiner> {
    if base_a.len() != actual.len() || base_b.len() != actual.len() {
        return Err(Error::LengthMismatch {
            what: "stacking periods",
            left: base_a.len().min(base_b.len()),
            right: actual.len(),
        });
    }
    if let Some(row) = base_a.iter().chain(base_b).find(|r| r.len() != levels.len()) {
        return Err(Error::LengthMismatch {
            what: "stacking row vs levels",
            left: row.len(),
            right: levels.len(),
        });
    }
    let weights = levels
        .par_iter()
        .enumerate()
        .map(|(k, &tau)| {
            let a: Vec<f64> = base_a.iter().map(|r| r[k]).collect();
            let b: Vec<f64> = base_b.iter().map(|r| r[k]).collect();
            fit_stacking_level(&a, &b, actual, tau, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StackingCombiner {
        levels: levels.to_vec(),
        weights,
    })
}

impl StackingCombiner {
    /// Affine combination per level. No clipping is applied.
    pub fn predict(&self, p_a: &QuantileForecast, p_b: &QuantileForecast) -> Result<QuantileForecast> {
        if p_a.levels != self.levels || p_b.levels != self.levels {
            return Err(Error::InvalidParameter("forecast levels differ from combiner levels".into()));
        }
        Ok(QuantileForecast {
            timestamp: p_a.timestamp.or(p_b.timestamp),
            levels: self.levels.clone(),
            values: self
                .weights
                .iter()
                .zip(p_a.values.iter().zip(&p_b.values))
                .map(|(w, (&a, &b))| w[0] * a + w[1] * b + w[2])
                .collect(),
        })
    }

    /// Combine when one of the sources may be missing; a lone source is
    /// passed through unchanged.
    pub fn predict_partial(
        &self,
        p_a: Option<&QuantileForecast>,
        p_b: Option<&QuantileForecast>,
    ) -> Result<QuantileForecast> {
        match (p_a, p_b) {
            (Some(a), Some(b)) => self.predict(a, b),
            (Some(one), None) | (None, Some(one)) => Ok(one.clone()),
            (None, None) => Err(Error::EmptyInput("both sister forecasts missing")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::load_json(path)
    }
}

/// Grid of truncation coefficients searched per level.
pub fn truncation_grid() -> Vec<f64> {
    (90..=100).map(|i| i as f64 / 100.0).collect()
}

/// Per-level caps `c_τ·Q`. A missing capacity means no outage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationModel {
    pub levels: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub capacity: Option<f64>,
}

impl TruncationModel {
    pub fn identity(levels: &[f64]) -> Self {
        Self {
            levels: levels.to_vec(),
            coefficients: vec![1.0; levels.len()],
            capacity: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() != self.coefficients.len() {
            return Err(Error::LengthMismatch {
                what: "truncation levels vs coefficients",
                left: self.levels.len(),
                right: self.coefficients.len(),
            });
        }
        if self.coefficients.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("truncation coefficients must be non-decreasing".into()));
        }
        if matches!(self.capacity, Some(q) if !(q > 0.0)) {
            return Err(Error::InvalidParameter("capacity must be positive".into()));
        }
        Ok(())
    }

    /// Coefficient at any level, interpolated between fitted levels.
    pub fn coefficient_at(&self, level: f64) -> f64 {
        let qf = QuantileForecast {
            timestamp: None,
            levels: self.levels.clone(),
            values: self.coefficients.clone(),
        };
        qf.value_at(level)
    }

    pub fn cap(&self, level: f64) -> f64 {
        match self.capacity {
            Some(q) => self.coefficient_at(level) * q,
            None => f64::INFINITY,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = crate::io::load_json(path)?;
        m.validate()?;
        Ok(m)
    }
}

/// `min(ŷ_τ, c_τ·Q)` at every level.
pub fn apply_truncation(forecast: &QuantileForecast, model: &TruncationModel) -> QuantileForecast {
    forecast.map_values(|i, v| v.min(model.cap(forecast.levels[i])))
}

/// Least-squares non-decreasing fit with equal weights.
pub fn pool_adjacent_violators(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let merged = (m1 * n1 as f64 + m2 * n2 as f64) / (n1 + n2) as f64;
            *blocks.last_mut().unwrap() = (merged, n1 + n2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// Tune `c_τ` on a recent window: per level, the grid value with the lowest
/// pinball loss of the truncated forecast (ties go to the larger value), then
/// made monotone across levels by pool-adjacent-violators.
pub fn fit_truncation(
    forecasts: &[Vec<f64>],
    actuals: &[f64],
    levels: &[f64],
    capacity: Option<f64>,
) -> Result<TruncationModel> {
    if actuals.is_empty() {
        return Err(Error::EmptyInput("truncation window"));
    }
    if forecasts.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            what: "truncation forecasts vs actuals",
            left: forecasts.len(),
            right: actuals.len(),
        });
    }
    let Some(q) = capacity else {
        return Ok(TruncationModel::identity(levels));
    };
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!("capacity {q} must be positive")));
    }
    let grid = truncation_grid();
    let raw: Vec<f64> = levels
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let mut best: (f64, f64) = (f64::INFINITY, 1.0);
            for &c in grid.iter().rev() {
                let loss: f64 = forecasts
                    .iter()
                    .zip(actuals)
                    .map(|(row, &y)| pinball(y, row[k].min(c * q), tau))
                    .sum();
                if best.0.is_infinite() || loss < best.0 - 1e-12 * best.0.abs().max(1.0) {
                    best = (loss, c);
                }
            }
            best.1
        })
        .collect();
    Ok(TruncationModel {
        levels: levels.to_vec(),
        coefficients: pool_adjacent_violators(&raw),
        capacity: Some(q),
    })
}
