//! Walk-forward backtest of day-ahead bidding strategies on a synthetic
//! market with a time-of-day price spread.

use hybridcast::harness::{generate, Scenario};
use hybridcast::trading::backtest::{backtest, BacktestConfig};
use hybridcast::trading::strategy::{PowerForecast, Strategy};

fn main() -> hybridcast::Result<()> {
    let data = generate(&Scenario::named("seasonal-spread", 5)?.with_days(40))?;
    // Stand-in point forecasts: truth plus a deterministic error.
    let forecasts: Vec<PowerForecast> = data
        .market
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let err = 60.0 * ((i as f64) * 0.37).sin();
            PowerForecast {
                timestamp: r.timestamp,
                q50: (r.actual + err).max(0.0),
                mse: (r.actual + 0.8 * err).max(0.0),
            }
        })
        .collect();

    let strategies = [Strategy::Perfect, Strategy::StMse, Strategy::StQ50, Strategy::Q50, Strategy::Naive, Strategy::Ar];
    let cfg = BacktestConfig {
        window_days: 20,
        min_history_days: 10,
        ..BacktestConfig::default()
    };
    let report = backtest(&strategies, &data.market, &forecasts, &cfg)?;
    println!("{} days evaluated", report.days.len());
    println!("{:<12} {:>14} {:>14}", "strategy", "revenue", "trading loss");
    for s in &report.summaries {
        println!("{:<12} {:>14.0} {:>14.0}", s.strategy.name(), s.total_revenue, s.trading_loss);
    }
    Ok(())
}
