//! Train a spread forecaster on trading loss instead of accuracy, keeping
//! its squared error within a budget, and compare the two on held-out data.

use hybridcast::harness::{generate, Scenario};
use hybridcast::trading::e2e::{
    mean_trading_loss, spread_mse, train_accuracy_model, train_error_shaping, ErrorShapingConfig, SpreadSample,
};

fn main() -> hybridcast::Result<()> {
    let data = generate(&Scenario::named("asymmetric", 100)?.with_days(60))?;
    // A crude power forecast that over-predicts at night and under-predicts
    // around midday, so the best spread forecast depends on the period.
    let samples: Vec<SpreadSample> = data
        .market
        .records
        .iter()
        .map(|r| {
            let period = r.period();
            let bias = if (16..=32).contains(&period) { -40.0 } else { 30.0 };
            SpreadSample {
                power: (r.actual + bias).max(0.0),
                actual: r.actual,
                spread: r.spread(),
                period,
            }
        })
        .collect();
    let cut = samples.len() * 3 / 4;
    let (train, test) = samples.split_at(cut);

    let cfg = ErrorShapingConfig {
        epochs: 150,
        ..ErrorShapingConfig::default()
    };
    let accuracy = train_accuracy_model(train, &cfg)?;
    let shaped = train_error_shaping(train, &cfg)?;
    println!("{:<14} {:>14} {:>12}", "model", "trading loss", "spread mse");
    for (name, m) in [("accuracy", &accuracy), ("error-shaping", &shaped)] {
        println!("{name:<14} {:>14.1} {:>12.1}", mean_trading_loss(m, test), spread_mse(m, test));
    }
    Ok(())
}
