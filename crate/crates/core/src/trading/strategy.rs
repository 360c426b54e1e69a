//! Bidding strategies: bid-as-forecast, stochastic trading with different
//! spread predictors, and the learned error-shaping head.

use chrono::{DateTime, Duration, Utc};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::e2e::ErrorShapingModel;
use super::{estimate_spread, optimal_bid, MarketRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// MSE power forecast plus per-period spread means.
    StMse,
    /// Median power forecast plus per-period spread means.
    StQ50,
    /// Bid the median forecast.
    Q50,
    /// Bid the MSE forecast.
    Mse,
    /// MSE forecast plus the window-wide mean spread.
    Naive,
    /// MSE forecast plus yesterday's spread for the same period.
    Persistence,
    /// MSE forecast plus an autoregressive spread forecast.
    Ar,
    /// MSE forecast plus the error-shaping spread head.
    E2e,
    /// Actual generation and realised spread.
    Perfect,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::StMse,
        Strategy::StQ50,
        Strategy::Q50,
        Strategy::Mse,
        Strategy::Naive,
        Strategy::Persistence,
        Strategy::Ar,
        Strategy::E2e,
        Strategy::Perfect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::StMse => "st-mse",
            Strategy::StQ50 => "st-q50",
            Strategy::Q50 => "q50",
            Strategy::Mse => "mse",
            Strategy::Naive => "naive",
            Strategy::Persistence => "persistence",
            Strategy::Ar => "ar",
            Strategy::E2e => "e2e",
            Strategy::Perfect => "perfect",
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Strategy>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(|p| p.trim().parse()).collect()
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::parse("strategy", format!("unknown strategy `{s}`")))
    }
}

/// Power forecasts available to the trader for one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerForecast {
    pub timestamp: DateTime<Utc>,
    pub q50: f64,
    pub mse: f64,
}

/// Everything a strategy may look at when bidding one day.
pub struct BidContext<'a> {
    /// Market records strictly before the day, oldest first.
    pub history: &'a [MarketRecord],
    /// The day being bid. Only [`Strategy::Perfect`] reads its outcomes.
    pub day: &'a [MarketRecord],
    pub forecasts: &'a [PowerForecast],
    /// Trailing window length in periods.
    pub window: usize,
    pub ar_order: usize,
    pub e2e: Option<&'a ErrorShapingModel>,
}

/// Power and spread estimates behind a day's bids, and the bids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPlan {
    pub power: Vec<f64>,
    pub spread: Vec<f64>,
    pub bids: Vec<f64>,
}

/// Produce a day's bids for a strategy.
pub fn baseline_bid(strategy: Strategy, ctx: &BidContext<'_>) -> Result<DayPlan> {
    if ctx.forecasts.len() != ctx.day.len() {
        return Err(Error::LengthMismatch {
            what: "forecasts vs day periods",
            left: ctx.forecasts.len(),
            right: ctx.day.len(),
        });
    }
    let n = ctx.day.len();
    let mse: Vec<f64> = ctx.forecasts.iter().map(|f| f.mse).collect();
    let q50: Vec<f64> = ctx.forecasts.iter().map(|f| f.q50).collect();
    let window = || &ctx.history[ctx.history.len().saturating_sub(ctx.window)..];

    let (power, spread) = match strategy {
        Strategy::Q50 => (q50, vec![0.0; n]),
        Strategy::Mse => (mse, vec![0.0; n]),
        Strategy::StMse | Strategy::StQ50 => {
            let est = estimate_spread(ctx.history, ctx.window)?;
            let spread = ctx.day.iter().map(|r| est.mean(r.period())).collect();
            (if strategy == Strategy::StMse { mse } else { q50 }, spread)
        }
        Strategy::Naive => {
            let w = window();
            if w.is_empty() {
                return Err(Error::InsufficientHistory("no spread history".into()));
            }
            let mean = w.iter().map(|r| r.spread()).sum::<f64>() / w.len() as f64;
            (mse, vec![mean; n])
        }
        Strategy::Persistence => {
            let spread = ctx
                .day
                .iter()
                .map(|r| persistence_spread(ctx.history, r.timestamp))
                .collect::<Result<Vec<_>>>()?;
            (mse, spread)
        }
        Strategy::Ar => {
            let series: Vec<f64> = window().iter().map(|r| r.spread()).collect();
            let model = fit_ar(&series, ctx.ar_order)?;
            (mse, model.forecast(&series, n))
        }
        Strategy::E2e => {
            let model = ctx
                .e2e
                .ok_or_else(|| Error::InvalidParameter("e2e strategy needs a trained model".into()))?;
            let spread = ctx
                .day
                .iter()
                .zip(&mse)
                .map(|(r, &p)| model.predict(p, r.period()))
                .collect();
            (mse, spread)
        }
        Strategy::Perfect => (
            ctx.day.iter().map(|r| r.actual).collect(),
            ctx.day.iter().map(|r| r.spread()).collect(),
        ),
    };
    let bids = power.iter().zip(&spread).map(|(&p, &s)| optimal_bid(p, s)).collect();
    Ok(DayPlan { power, spread, bids })
}

fn persistence_spread(history: &[MarketRecord], ts: DateTime<Utc>) -> Result<f64> {
    let target = ts - Duration::days(1);
    history
        .binary_search_by(|r| r.timestamp.cmp(&target))
        .map(|i| history[i].spread())
        .map_err(|_| Error::InsufficientHistory(format!("no spread observed at {target}")))
}

/// Autoregressive model `x_t = c + Σ a_i·x_{t−i}` fitted by least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub intercept: f64,
    /// `coefs[i]` multiplies lag `i + 1`.
    pub coefs: Vec<f64>,
}

pub fn fit_ar(series: &[f64], order: usize) -> Result<ArModel> {
    if order == 0 {
        return Err(Error::InvalidParameter("AR order must be positive".into()));
    }
    let rows = series.len().saturating_sub(order);
    if rows < 2 * (order + 1) {
        return Err(Error::InsufficientHistory(format!(
            "AR({order}) needs at least {} observations, have {}",
            3 * order + 2,
            series.len()
        )));
    }
    let x = DMatrix::from_fn(rows, order + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            series[order + r - c]
        }
    });
    let y = DVector::from_fn(rows, |r, _| series[order + r]);
    let xt = x.transpose();
    let mut gram = &xt * &x;
    let ridge = 1e-10 * gram.trace() / (order + 1) as f64;
    for i in 0..=order {
        gram[(i, i)] += ridge;
    }
    let rhs = &xt * y;
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::InvalidParameter("singular AR design".into()))?;
    Ok(ArModel {
        intercept: beta[0],
        coefs: beta.iter().skip(1).copied().collect(),
    })
}

impl ArModel {
    /// Recursive multi-step forecast continuing `history`.
    pub fn forecast(&self, history: &[f64], steps: usize) -> Vec<f64> {
        let p = self.coefs.len();
        let mut buf: Vec<f64> = history[history.len().saturating_sub(p)..].to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let next = self.intercept
                + self
                    .coefs
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * buf.get(buf.len().wrapping_sub(i + 1)).copied().unwrap_or(0.0))
                    .sum::<f64>();
            buf.push(next);
            out.push(next);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!(
            Strategy::parse_list("st-mse,q50").unwrap(),
            vec![Strategy::StMse, Strategy::Q50]
        );
        assert!("foo".parse::<Strategy>().is_err());
    }

    #[test]
    fn ar_recovers_known_process() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut x = vec![0.0, 1.0];
        for t in 2..400 {
            let noise: f64 = rng.random_range(-0.5..0.5);
            x.push(2.0 + 0.6 * x[t - 1] - 0.2 * x[t - 2] + noise);
        }
        let m = fit_ar(&x, 2).unwrap();
        assert!((m.coefs[0] - 0.6).abs() < 0.1, "{m:?}");
        assert!((m.coefs[1] + 0.2).abs() < 0.1, "{m:?}");
        assert_eq!(m.forecast(&x, 5).len(), 5);
        assert!(fit_ar(&x[..5], 2).is_err());
    }
}
