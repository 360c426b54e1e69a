//! Day-ahead bidding under a quadratic imbalance penalty.
//!
//! Revenue for one half-hour with bid `e`, actual generation `y`, day-ahead
//! price `π_DA` and imbalance price `π_SS` is
//! `e·π_DA + (y − e)·π_SS − k·(y − e)²`. With spread `π_D = π_DA − π_SS`
//! the expected-revenue maximiser is `ŷ + E[π_D]/(2k)`, clipped to the
//! market bounds.

pub mod backtest;
pub mod e2e;
pub mod strategy;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::dataprep::period_of_day;
use crate::error::{Error, Result};

/// Imbalance penalty coefficient (£/MWh²).
pub const K: f64 = 0.07;
/// Bid offset per £/MWh of expected spread, `1/(2k)` (≈ 7.14).
pub const BID_SLOPE: f64 = 1.0 / (2.0 * K);
/// Weight of the squared spread error in the trading loss, `1/(4k)` (≈ 3.57).
pub const SPREAD_LOSS_WEIGHT: f64 = 1.0 / (4.0 * K);
pub const BID_MIN: f64 = 0.0;
pub const BID_MAX: f64 = 1800.0;
pub const PERIODS_PER_DAY: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketRecord {
    pub timestamp: DateTime<Utc>,
    pub da_price: f64,
    pub ss_price: f64,
    pub actual: f64,
}

impl MarketRecord {
    pub fn spread(&self) -> f64 {
        self.da_price - self.ss_price
    }

    /// Settlement period within the day, 1..=48.
    pub fn period(&self) -> usize {
        period_of_day(self.timestamp) as usize + 1
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

/// Chronological half-hourly market records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketSeries {
    pub records: Vec<MarketRecord>,
}

impl MarketSeries {
    pub fn new(records: Vec<MarketRecord>) -> Result<Self> {
        if records.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::InvalidParameter("market timestamps must be strictly increasing".into()));
        }
        if records.iter().any(|r| !r.da_price.is_finite() || !r.ss_price.is_finite()) {
            return Err(Error::UncleanDataset("non-finite market price".into()));
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn spreads(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.spread()).collect()
    }

    /// Records grouped by UTC date, in order.
    pub fn days(&self) -> Vec<(NaiveDate, &[MarketRecord])> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.records.len() {
            if i == self.records.len() || self.records[i].date() != self.records[start].date() {
                out.push((self.records[start].date(), &self.records[start..i]));
                start = i;
            }
        }
        out
    }
}

/// Per-period conditional spread means over a trailing window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadEstimator {
    pub window: usize,
    /// `means[t - 1]` is the expected spread for period `t`.
    pub means: Vec<f64>,
}

impl SpreadEstimator {
    pub fn mean(&self, period: usize) -> f64 {
        self.means[period - 1]
    }

    pub fn global_mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }
}

/// Mean spread per period of day over the last `w` records. A period with
/// no sample in the window falls back to the mean of the whole window.
pub fn estimate_spread(history: &[MarketRecord], w: usize) -> Result<SpreadEstimator> {
    if history.is_empty() {
        return Err(Error::EmptyInput("spread history"));
    }
    if history.len() < PERIODS_PER_DAY {
        return Err(Error::InsufficientHistory(format!(
            "{} records, need at least {PERIODS_PER_DAY}",
            history.len()
        )));
    }
    let window = &history[history.len().saturating_sub(w.max(1))..];
    let mut sums = [0.0; PERIODS_PER_DAY];
    let mut counts = [0usize; PERIODS_PER_DAY];
    for r in window {
        sums[r.period() - 1] += r.spread();
        counts[r.period() - 1] += 1;
    }
    let global = window.iter().map(|r| r.spread()).sum::<f64>() / window.len() as f64;
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { global })
        .collect();
    Ok(SpreadEstimator { window: w, means })
}

/// Expected-revenue maximising bid `clamp(ŷ + Ê/(2k), 0, 1800)`.
#[inline]
pub fn optimal_bid(yhat: f64, spread_mean: f64) -> f64 {
    (yhat + BID_SLOPE * spread_mean).clamp(BID_MIN, BID_MAX)
}

fn interior(yhat: f64, spread: f64) -> bool {
    let raw = yhat + BID_SLOPE * spread;
    raw > BID_MIN && raw < BID_MAX
}

/// Revenue of one period.
#[inline]
pub fn period_revenue(bid: f64, actual: f64, da_price: f64, ss_price: f64) -> f64 {
    let imbalance = actual - bid;
    bid * da_price + imbalance * ss_price - K * imbalance * imbalance
}

/// Total revenue of a bid schedule against aligned market records.
pub fn settle(bids: &[f64], market: &[MarketRecord]) -> Result<f64> {
    if bids.len() != market.len() {
        return Err(Error::LengthMismatch {
            what: "bids vs market periods",
            left: bids.len(),
            right: market.len(),
        });
    }
    Ok(bids
        .iter()
        .zip(market)
        .map(|(&e, m)| period_revenue(e, m.actual, m.da_price, m.ss_price))
        .sum())
}

/// Revenue lost against the perfect-information bid, computed directly from
/// settlement with clipping. Only the spread is needed, since both prices
/// enter revenue differences through `π_D`.
pub fn realized_trading_loss(yhat: f64, y: f64, spread_hat: f64, spread: f64) -> f64 {
    let best = optimal_bid(y, spread);
    let bid = optimal_bid(yhat, spread_hat);
    period_revenue(best, y, spread, 0.0) - period_revenue(bid, y, spread, 0.0)
}

/// Closed-form trading loss
/// `k·(ŷ − y)² + (π̂ − π)²/(4k) + (ŷ − y)(π̂ − π)`,
/// valid when neither implied bid is clipped.
///
/// The three terms form the square `k·(e_p + e_π/(2k))²`, which is what is
/// evaluated: summing them separately cancels badly when the loss is small.
pub fn trading_loss(yhat: f64, y: f64, spread_hat: f64, spread: f64) -> Result<f64> {
    if !interior(yhat, spread_hat) || !interior(y, spread) {
        return Err(Error::NotInterior);
    }
    let d = (yhat - y) + BID_SLOPE * (spread_hat - spread);
    Ok(K * d * d)
}

/// Derivative of [`realized_trading_loss`] with respect to `spread_hat`:
/// `(π̂ − π)/(2k) + (ŷ − y)` for an interior bid and zero when clipped.
pub fn trading_loss_gradient(yhat: f64, y: f64, spread_hat: f64, spread: f64) -> f64 {
    if interior(yhat, spread_hat) {
        BID_SLOPE * (spread_hat - spread) + (yhat - y)
    } else {
        0.0
    }
}

/// A half-hour of bids with settlement annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidSchedule {
    pub date: NaiveDate,
    pub bids: Vec<f64>,
    pub revenue: Option<f64>,
}

impl BidSchedule {
    pub fn new(date: NaiveDate, bids: Vec<f64>) -> Self {
        Self {
            date,
            bids: bids.into_iter().map(|b| b.clamp(BID_MIN, BID_MAX)).collect(),
            revenue: None,
        }
    }

    pub fn settle(&mut self, market: &[MarketRecord]) -> Result<f64> {
        let r = settle(&self.bids, market)?;
        self.revenue = Some(r);
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    fn day(spread: impl Fn(usize) -> f64, days: usize) -> Vec<MarketRecord> {
        let t0 = Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
        (0..days * 48)
            .map(|i| MarketRecord {
                timestamp: t0 + Duration::minutes(30 * i as i64),
                da_price: 50.0 + spread(i % 48 + 1),
                ss_price: 50.0,
                actual: 100.0,
            })
            .collect()
    }

    #[test]
    fn bid_examples() {
        assert_eq!(optimal_bid(500.0, 0.0), 500.0);
        assert!((optimal_bid(500.0, 10.0) - 571.428571).abs() < 1e-5);
        assert_eq!(optimal_bid(1790.0, 10.0), 1800.0);
        assert_eq!(optimal_bid(10.0, -100.0), 0.0);
    }

    #[test]
    fn settlement_examples() {
        let t = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let m = |y, da, ss| MarketRecord {
            timestamp: t,
            da_price: da,
            ss_price: ss,
            actual: y,
        };
        assert!((settle(&[90.0], &[m(100.0, 50.0, 40.0)]).unwrap() - 4893.0).abs() < 1e-9);
        assert_eq!(settle(&[100.0], &[m(100.0, 50.0, 40.0)]).unwrap(), 5000.0);
        assert_eq!(settle(&[0.0], &[m(0.0, 50.0, 40.0)]).unwrap(), 0.0);
        assert!(settle(&[1.0, 2.0], &[m(0.0, 1.0, 1.0)]).is_err());
    }

    #[test]
    fn loss_examples() {
        assert_eq!(trading_loss(500.0, 500.0, 3.0, 3.0).unwrap(), 0.0);
        assert!((trading_loss(510.0, 500.0, 3.0, 3.0).unwrap() - 7.0).abs() < 1e-9);
        let closed = trading_loss(510.0, 500.0, 2.0, 3.0).unwrap();
        assert!((closed - (7.0 + SPREAD_LOSS_WEIGHT - 10.0)).abs() < 1e-9);
        assert!((closed - realized_trading_loss(510.0, 500.0, 2.0, 3.0)).abs() < 1e-9);
        assert!(matches!(trading_loss(1790.0, 500.0, 10.0, 3.0), Err(Error::NotInterior)));
    }

    #[test]
    fn spread_means_per_period() {
        let recs = day(|_| 4.0, 3);
        let est = estimate_spread(&recs, 2880).unwrap();
        assert!(est.means.iter().all(|&m| (m - 4.0).abs() < 1e-12));

        let recs = day(|t| if t <= 24 { 10.0 } else { -10.0 }, 2);
        let est = estimate_spread(&recs, 2880).unwrap();
        assert!((est.mean(1) - 10.0).abs() < 1e-12 && (est.mean(48) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn missing_period_uses_window_mean() {
        let mut recs = day(|t| t as f64, 2);
        recs.retain(|r| r.period() != 7);
        let est = estimate_spread(&recs, 2880).unwrap();
        let global = recs.iter().map(|r| r.spread()).sum::<f64>() / recs.len() as f64;
        assert!((est.mean(7) - global).abs() < 1e-12);
        assert!(estimate_spread(&[], 10).is_err());
    }

    #[test]
    fn days_are_grouped() {
        let s = MarketSeries::new(day(|_| 0.0, 3)).unwrap();
        let days = s.days();
        assert_eq!(days.len(), 3);
        assert!(days.iter().all(|d| d.1.len() == 48));
    }
}
