//! Correct a frozen solar model after a capacity increase with a rolling
//! quantile-regression window that is refit every day.

use hybridcast::forecast::desk_levels;
use hybridcast::gbqr::{QuantileModelSet, TrainConfig};
use hybridcast::harness::{generate, Scenario};
use hybridcast::metrics::mpl;
use hybridcast::postproc::{OnlinePostProcessor, WindowSample};

fn main() -> hybridcast::Result<()> {
    let data = generate(&Scenario::named("capacity-shift", 1)?)?;
    let ds = &data.solar[0];
    let levels = desk_levels();
    let train_end = 40 * 48;
    let cfg = TrainConfig {
        num_estimators: 80,
        ..TrainConfig::default()
    };
    let model = QuantileModelSet::train_dataset(&ds.slice(0..train_end), &levels, &cfg)?;
    let forecasts = model.predict_dataset(&ds.slice(train_end..ds.len()))?;
    let actual = data.solar_actuals();

    let mut online = OnlinePostProcessor::new(&levels, Some(data.scenario.final_solar_capacity()));
    let (mut raw, mut corrected, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (day, chunk) in forecasts.chunks(48).enumerate() {
        let first = train_end + day * 48;
        if day >= 20 {
            for (k, f) in chunk.iter().enumerate() {
                raw.push(f.values.clone());
                corrected.push(online.apply(f).values);
                y.push(actual[first + k]);
            }
        }
        let samples: Vec<WindowSample> = chunk
            .iter()
            .enumerate()
            .map(|(k, f)| WindowSample {
                timestamp: ds.rows[first + k].timestamp,
                forecast: f.values.clone(),
                actual: actual[first + k],
            })
            .collect();
        online.rolling_update(&samples)?;
    }

    let median = levels.iter().position(|&t| t == 0.5).unwrap();
    println!("median-level polynomial: {:?}", online.model.coefficients[median]);
    println!("MPL frozen model     {:.3}", mpl(&y, &raw, &levels)?);
    println!("MPL with correction  {:.3}", mpl(&y, &corrected, &levels)?);
    Ok(())
}
