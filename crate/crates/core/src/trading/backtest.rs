//! Walk-forward daily backtest of bidding strategies.
//!
//! Each day is bid using only market records before it. Days with missing
//! periods are skipped with a warning, as are evaluated days without power
//! forecasts. Warm-up days need market records only. Strategies for
//! one day run in parallel on the same frozen history.

use std::collections::HashMap;

use chrono::{DateTime, NaiveDate, Utc};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::e2e::{train_error_shaping, ErrorShapingConfig, ErrorShapingModel, SpreadSample};
use super::strategy::{baseline_bid, BidContext, PowerForecast, Strategy};
use super::{period_revenue, realized_trading_loss, MarketSeries, K, PERIODS_PER_DAY, SPREAD_LOSS_WEIGHT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Trailing window for spread estimation, in days.
    pub window_days: usize,
    /// Complete days that must precede the first evaluated day.
    pub min_history_days: usize,
    pub ar_order: usize,
    /// The error-shaping head is retrained on the trailing window every
    /// this many evaluated days.
    pub e2e_retrain_days: usize,
    pub e2e: ErrorShapingConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window_days: 60,
            min_history_days: 7,
            ar_order: 48,
            e2e_retrain_days: 7,
            e2e: ErrorShapingConfig::default(),
        }
    }
}

/// Revenue of every strategy on one evaluated day, in strategy order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRevenue {
    pub date: NaiveDate,
    pub revenues: Vec<f64>,
}

/// Totals for one strategy. The three loss terms are the sums of
/// `k·e_p²`, `e_π²/(4k)` and `e_p·e_π` over evaluated periods, where `e_p`
/// and `e_π` are the power and spread errors behind each bid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub total_revenue: f64,
    /// Summed realised trading loss, clipping included.
    pub trading_loss: f64,
    pub power_term: f64,
    pub spread_term: f64,
    pub cross_term: f64,
    pub periods: usize,
}

/// One point of the error scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub timestamp: DateTime<Utc>,
    pub strategy: Strategy,
    pub power_error: f64,
    pub spread_error: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategies: Vec<Strategy>,
    pub days: Vec<DayRevenue>,
    pub summaries: Vec<StrategySummary>,
    pub scatter: Vec<ScatterPoint>,
    pub skipped: Vec<NaiveDate>,
}

impl BacktestReport {
    pub fn summary(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    pub fn total(&self, strategy: Strategy) -> Option<f64> {
        self.summary(strategy).map(|s| s.total_revenue)
    }
}

fn e2e_samples(
    history: &[super::MarketRecord],
    forecasts: &HashMap<DateTime<Utc>, PowerForecast>,
) -> Vec<SpreadSample> {
    history
        .iter()
        .filter_map(|r| {
            forecasts.get(&r.timestamp).map(|f| SpreadSample {
                power: f.mse,
                actual: r.actual,
                spread: r.spread(),
                period: r.period(),
            })
        })
        .collect()
}

/// Run the walk-forward loop.
pub fn backtest(
    strategies: &[Strategy],
    market: &MarketSeries,
    forecasts: &[PowerForecast],
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    if strategies.is_empty() {
        return Err(Error::EmptyInput("strategy list"));
    }
    if cfg.window_days == 0 {
        return Err(Error::InvalidParameter("window must cover at least one day".into()));
    }
    let by_ts: HashMap<DateTime<Utc>, PowerForecast> = forecasts.iter().map(|f| (f.timestamp, *f)).collect();
    let window = cfg.window_days * PERIODS_PER_DAY;
    let needs_e2e = strategies.contains(&Strategy::E2e);

    let mut summaries: Vec<StrategySummary> = strategies
        .iter()
        .map(|&strategy| StrategySummary {
            strategy,
            total_revenue: 0.0,
            trading_loss: 0.0,
            power_term: 0.0,
            spread_term: 0.0,
            cross_term: 0.0,
            periods: 0,
        })
        .collect();
    let mut days_out = Vec::new();
    let mut scatter = Vec::new();
    let mut skipped = Vec::new();
    let mut complete_days = 0usize;
    let mut e2e_model: Option<ErrorShapingModel> = None;
    let mut since_retrain = 0usize;

    let mut offset = 0usize;
    for (date, day) in market.days() {
        let history = &market.records[..offset];
        offset += day.len();
        if day.len() != PERIODS_PER_DAY {
            warn!("skipping {date}: {} of {PERIODS_PER_DAY} periods present", day.len());
            skipped.push(date);
            continue;
        }
        if complete_days < cfg.min_history_days {
            complete_days += 1;
            continue;
        }
        complete_days += 1;
        let Some(day_forecasts) = day
            .iter()
            .map(|r| by_ts.get(&r.timestamp).copied())
            .collect::<Option<Vec<PowerForecast>>>()
        else {
            warn!("skipping {date}: power forecasts missing");
            skipped.push(date);
            continue;
        };

        if needs_e2e && (e2e_model.is_none() || since_retrain >= cfg.e2e_retrain_days.max(1)) {
            let recent = &history[history.len().saturating_sub(window)..];
            let samples = e2e_samples(recent, &by_ts);
            e2e_model = Some(train_error_shaping(&samples, &cfg.e2e)?);
            since_retrain = 0;
        }
        since_retrain += 1;

        let ctx = BidContext {
            history,
            day,
            forecasts: &day_forecasts,
            window,
            ar_order: cfg.ar_order,
            e2e: e2e_model.as_ref(),
        };
        let plans = strategies
            .par_iter()
            .map(|&s| baseline_bid(s, &ctx))
            .collect::<Result<Vec<_>>>()?;

        let mut revenues = Vec::with_capacity(strategies.len());
        for (summary, plan) in summaries.iter_mut().zip(&plans) {
            let mut day_total = 0.0;
            for (i, r) in day.iter().enumerate() {
                day_total += period_revenue(plan.bids[i], r.actual, r.da_price, r.ss_price);
                let ep = plan.power[i] - r.actual;
                let es = plan.spread[i] - r.spread();
                let loss = realized_trading_loss(plan.power[i], r.actual, plan.spread[i], r.spread());
                summary.trading_loss += loss;
                summary.power_term += K * ep * ep;
                summary.spread_term += SPREAD_LOSS_WEIGHT * es * es;
                summary.cross_term += ep * es;
                scatter.push(ScatterPoint {
                    timestamp: r.timestamp,
                    strategy: summary.strategy,
                    power_error: ep,
                    spread_error: es,
                    loss,
                });
            }
            summary.total_revenue += day_total;
            summary.periods += day.len();
            revenues.push(day_total);
        }
        days_out.push(DayRevenue { date, revenues });
    }

    Ok(BacktestReport {
        strategies: strategies.to_vec(),
        days: days_out,
        summaries,
        scatter,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trading::MarketRecord;
    use chrono::{Duration, TimeZone};

    fn scenario(days: usize) -> (MarketSeries, Vec<PowerForecast>) {
        let t0 = Utc.with_ymd_and_hms(2024, 5, 1, 0, 0, 0).unwrap();
        let mut recs = Vec::new();
        let mut fc = Vec::new();
        for i in 0..days * 48 {
            let ts = t0 + Duration::minutes(30 * i as i64);
            let period = i % 48 + 1;
            let wiggle = ((i * 2654435761usize) % 1000) as f64 / 1000.0 - 0.5;
            let spread = if period < 20 { 6.0 } else { -4.0 } + 8.0 * wiggle;
            let actual = 600.0 + 100.0 * wiggle;
            recs.push(MarketRecord {
                timestamp: ts,
                da_price: 60.0 + spread,
                ss_price: 60.0,
                actual,
            });
            fc.push(PowerForecast {
                timestamp: ts,
                q50: 600.0,
                mse: 600.0,
            });
        }
        (MarketSeries::new(recs).unwrap(), fc)
    }

    #[test]
    fn perfect_bounds_everything_and_report_is_deterministic() {
        let (market, fc) = scenario(12);
        let strategies = [Strategy::Perfect, Strategy::StMse, Strategy::Q50, Strategy::Naive, Strategy::Persistence];
        let cfg = BacktestConfig {
            window_days: 5,
            min_history_days: 2,
            ..Default::default()
        };
        let a = backtest(&strategies, &market, &fc, &cfg).unwrap();
        let b = backtest(&strategies, &market, &fc, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.days.len(), 10);
        for day in &a.days {
            assert!(day.revenues.iter().all(|&r| r <= day.revenues[0]));
        }
        assert_eq!(a.scatter.len(), 10 * 48 * strategies.len());
        assert!(a.total(Strategy::StMse).unwrap() >= a.total(Strategy::Q50).unwrap());
    }

    #[test]
    fn incomplete_days_are_skipped() {
        let (market, mut fc) = scenario(6);
        fc.remove(48 * 4 + 3);
        let cfg = BacktestConfig {
            min_history_days: 1,
            ..Default::default()
        };
        let r = backtest(&[Strategy::Mse], &market, &fc, &cfg).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.days.len(), 4);
    }
}
