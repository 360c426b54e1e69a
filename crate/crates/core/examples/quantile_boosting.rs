//! Train one gradient-boosted model per quantile level on synthetic wind
//! data and check calibration on held-out days.

use hybridcast::forecast::desk_levels;
use hybridcast::gbqr::{QuantileModelSet, TrainConfig};
use hybridcast::harness::{generate, Scenario};
use hybridcast::metrics::{empirical_coverage, mpl};

fn main() -> hybridcast::Result<()> {
    let data = generate(&Scenario::named("gaussian", 42)?.with_days(40))?;
    let ds = &data.wind[0];
    let split = ds.len() * 3 / 4;
    let (train, test) = (ds.slice(0..split), ds.slice(split..ds.len()));

    let cfg = TrainConfig {
        num_estimators: 120,
        learning_rate: 0.05,
        max_depth: 4,
        num_leaves: 16,
        min_data_in_leaf: 20,
        ..TrainConfig::default()
    };
    let levels = desk_levels();
    let models = QuantileModelSet::train_dataset(&train, &levels, &cfg)?;
    let forecasts = models.predict_dataset(&test)?;
    let actual = test.targets()?;

    let values: Vec<Vec<f64>> = forecasts.iter().map(|f| f.values.clone()).collect();
    println!("held-out mean pinball loss: {:.3}", mpl(&actual, &values, &levels)?);
    for (k, tau) in levels.iter().enumerate().step_by(4) {
        let q: Vec<f64> = values.iter().map(|v| v[k]).collect();
        println!("  level {tau:.3}  coverage {:.3}", empirical_coverage(&q, &actual)?);
    }
    Ok(())
}
