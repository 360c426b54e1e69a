//! Scoring rules for probabilistic forecasts: pinball / MPL, CRPS, Winkler
//! score and empirical coverage.
//!
//! The pinball loss is the usual non-negative form
//! `τ(y − ŷ)` when `y ≥ ŷ` and `(1 − τ)(ŷ − y)` otherwise.

use serde::{Deserialize, Serialize};

use crate::aggregate::DiscreteDistribution;
use crate::error::{Error, Result};

/// Pinball (quantile) loss of a single prediction.
#[inline]
pub fn pinball(y: f64, yhat: f64, tau: f64) -> f64 {
    if y >= yhat {
        tau * (y - yhat)
    } else {
        (1.0 - tau) * (yhat - y)
    }
}

/// Mean pinball loss over periods and levels.
///
/// `forecasts[t][k]` is the prediction for period `t` at `levels[k]`. The
/// score is the mean over levels of the per-level mean over periods.
pub fn mpl(actuals: &[f64], forecasts: &[Vec<f64>], levels: &[f64]) -> Result<f64> {
    if actuals.len() != forecasts.len() {
        return Err(Error::LengthMismatch {
            what: "actuals vs forecast periods",
            left: actuals.len(),
            right: forecasts.len(),
        });
    }
    if actuals.is_empty() {
        return Err(Error::EmptyInput("mpl actuals"));
    }
    if levels.is_empty() {
        return Err(Error::EmptyInput("mpl levels"));
    }
    if let Some(row) = forecasts.iter().find(|row| row.len() != levels.len()) {
        return Err(Error::LengthMismatch {
            what: "forecast row vs levels",
            left: row.len(),
            right: levels.len(),
        });
    }
    let periods = actuals.len() as f64;
    let per_level: f64 = levels
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            actuals
                .iter()
                .zip(forecasts)
                .map(|(&y, row)| pinball(y, row[k], tau))
                .sum::<f64>()
                / periods
        })
        .sum();
    Ok(per_level / levels.len() as f64)
}

/// Continuous ranked probability score of a discretized forecast.
///
/// The CDF is treated as piecewise linear between grid points, zero below the
/// grid and one above it, and the integral of `(F(x) − 1{x ≥ y})²` is
/// evaluated exactly over each cell. The tails outside the grid contribute
/// exactly `max(0, start − y)` and `max(0, y − end)`.
pub fn crps(dist: &DiscreteDistribution, y: f64) -> f64 {
    let cdf = &dist.cdf;
    let n = cdf.len();
    let start = dist.grid_start;
    let delta = dist.delta;
    let end = dist.grid_value(n - 1);

    let mut total = 0.0;
    if y < start {
        total += start - y;
    }
    if y > end {
        total += y - end;
    }
    for k in 0..n.saturating_sub(1) {
        let x0 = start + k as f64 * delta;
        let x1 = x0 + delta;
        let (f0, f1) = (cdf[k], cdf[k + 1]);
        if y <= x0 {
            total += segment_sq_integral(f0 - 1.0, f1 - 1.0, delta);
        } else if y >= x1 {
            total += segment_sq_integral(f0, f1, delta);
        } else {
            let w = (y - x0) / delta;
            let fy = f0 + w * (f1 - f0);
            total += segment_sq_integral(f0, fy, y - x0);
            total += segment_sq_integral(fy - 1.0, f1 - 1.0, x1 - y);
        }
    }
    total
}

// ∫ over an interval of length `len` of the square of a linear function with
// endpoint values a and b.
#[inline]
fn segment_sq_integral(a: f64, b: f64, len: f64) -> f64 {
    len * (a * a + a * b + b * b) / 3.0
}

/// Mean CRPS over a set of forecasts.
pub fn mcrps(dists: &[DiscreteDistribution], actuals: &[f64]) -> Result<f64> {
    if dists.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            what: "distributions vs actuals",
            left: dists.len(),
            right: actuals.len(),
        });
    }
    if dists.is_empty() {
        return Err(Error::EmptyInput("mcrps"));
    }
    Ok(dists.iter().zip(actuals).map(|(d, &y)| crps(d, y)).sum::<f64>() / dists.len() as f64)
}

/// Central prediction interval at confidence `1 − alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalForecast {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

impl IntervalForecast {
    pub fn new(lower: f64, upper: f64, alpha: f64) -> Result<Self> {
        if lower > upper {
            return Err(Error::InvalidParameter(format!(
                "interval lower {lower} exceeds upper {upper}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} not in (0,1)")));
        }
        Ok(Self { lower, upper, alpha })
    }

    pub fn winkler(&self, y: f64) -> f64 {
        winkler(self.lower, self.upper, y, self.alpha)
    }
}

/// Winkler score of one interval.
pub fn winkler(lower: f64, upper: f64, y: f64, alpha: f64) -> f64 {
    let width = upper - lower;
    if y < lower {
        width + 2.0 / alpha * (lower - y)
    } else if y > upper {
        width + 2.0 / alpha * (y - upper)
    } else {
        width
    }
}

/// Mean Winkler score. With the scored level set the bounds are the q10 and
/// q90 forecasts and `alpha = 0.2`.
pub fn mws(lower: &[f64], upper: &[f64], actuals: &[f64], alpha: f64) -> Result<f64> {
    if lower.len() != actuals.len() || upper.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            what: "interval bounds vs actuals",
            left: lower.len().min(upper.len()),
            right: actuals.len(),
        });
    }
    if actuals.is_empty() {
        return Err(Error::EmptyInput("mws"));
    }
    let sum: f64 = lower
        .iter()
        .zip(upper)
        .zip(actuals)
        .map(|((&l, &u), &y)| winkler(l, u, y, alpha))
        .sum();
    Ok(sum / actuals.len() as f64)
}

/// Fraction of actuals at or below the level forecast.
pub fn empirical_coverage(forecast: &[f64], actuals: &[f64]) -> Result<f64> {
    if forecast.len() != actuals.len() {
        return Err(Error::LengthMismatch {
            what: "forecast vs actuals",
            left: forecast.len(),
            right: actuals.len(),
        });
    }
    if actuals.is_empty() {
        return Err(Error::EmptyInput("coverage"));
    }
    let hits = forecast.iter().zip(actuals).filter(|(f, y)| y <= f).count();
    Ok(hits as f64 / actuals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball(7.0, 7.0, 0.3), 0.0);
        assert_eq!(pinball(10.0, 8.0, 0.5), 1.0);
        assert!((pinball(10.0, 12.0, 0.9) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mpl_examples() {
        let levels = [0.1, 0.5, 0.9];
        let actual = [3.0, 4.0];
        let perfect = vec![vec![3.0; 3], vec![4.0; 3]];
        assert_eq!(mpl(&actual, &perfect, &levels).unwrap(), 0.0);

        assert_eq!(mpl(&[10.0], &[vec![8.0]], &[0.5]).unwrap(), 1.0);

        let fc = vec![vec![1.0, 2.0, 5.0], vec![0.0, 4.5, 9.0]];
        let a = mpl(&actual, &fc, &levels).unwrap();
        let rev_fc: Vec<Vec<f64>> = fc.iter().map(|r| r.iter().rev().copied().collect()).collect();
        let b = mpl(&actual, &rev_fc, &[0.9, 0.5, 0.1]).unwrap();
        assert!((a - b).abs() < 1e-12);

        assert!(mpl(&actual, &fc[..1], &levels).is_err());
    }

    #[test]
    fn winkler_branches() {
        assert_eq!(winkler(10.0, 20.0, 15.0, 0.2), 10.0);
        assert!((winkler(10.0, 20.0, 5.0, 0.2) - 60.0).abs() < 1e-9);
        assert!((winkler(10.0, 20.0, 25.0, 0.2) - 60.0).abs() < 1e-9);
    }

    #[test]
    fn mws_examples() {
        let lo = [10.0, 0.0];
        let hi = [20.0, 4.0];
        assert_eq!(mws(&lo, &hi, &[12.0, 1.0], 0.2).unwrap(), 7.0);
        assert_eq!(mws(&lo[..1], &hi[..1], &[5.0], 0.2).unwrap(), winkler(10.0, 20.0, 5.0, 0.2));
        let a = mws(&lo, &hi, &[25.0, 1.0], 0.2).unwrap();
        let b = mws(&[0.0, 10.0], &[4.0, 20.0], &[1.0, 25.0], 0.2).unwrap();
        assert_eq!(a, b);
        assert!(mws(&lo, &hi, &[1.0], 0.2).is_err());
    }

    #[test]
    fn coverage_examples() {
        let ys = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_coverage(&[f64::INFINITY; 4], &ys).unwrap(), 1.0);
        assert_eq!(empirical_coverage(&[2.5; 4], &ys).unwrap(), 0.5);
        assert!(empirical_coverage(&[], &[]).is_err());
    }

    #[test]
    fn interval_rejects_inverted_bounds() {
        assert!(IntervalForecast::new(5.0, 1.0, 0.2).is_err());
        let iv = IntervalForecast::new(1.0, 5.0, 0.2).unwrap();
        assert!(iv.winkler(0.0) >= 4.0);
    }
}
