//! Blend two weather sources with a per-level stacking combiner, then cap
//! high quantiles against installed capacity.

use hybridcast::ensemble::{apply_truncation, fit_stacking, fit_truncation, StackingConfig};
use hybridcast::forecast::desk_levels;
use hybridcast::gbqr::{QuantileModelSet, TrainConfig};
use hybridcast::harness::{generate, Scenario};
use hybridcast::metrics::mpl;

fn main() -> hybridcast::Result<()> {
    let data = generate(&Scenario::named("gaussian", 3)?.with_days(45))?;
    let levels = desk_levels();
    let n = data.wind[0].len();
    let (a, b) = (n / 2, n * 3 / 4);
    let cfg = TrainConfig {
        num_estimators: 80,
        ..TrainConfig::default()
    };

    // Base models see only the first half; combiner and caps are fit on the
    // third quarter; the last quarter is scored.
    let mut base = Vec::new();
    for ds in &data.wind {
        let set = QuantileModelSet::train_dataset(&ds.slice(0..a), &levels, &cfg)?;
        let preds = set.predict_dataset(&ds.slice(a..n))?;
        base.push(preds.into_iter().map(|f| f.values).collect::<Vec<_>>());
    }
    let y = data.wind_actuals();
    let fit = 0..b - a;
    let test = b - a..n - a;

    let combiner = fit_stacking(&base[0][fit.clone()], &base[1][fit.clone()], &y[a..b], &levels, &StackingConfig::default())?;
    for (tau, w) in levels.iter().zip(&combiner.weights).step_by(2) {
        println!("level {tau:.2}: w_dwd {:.2}  w_gfs {:.2}  intercept {:.1}", w[0], w[1], w[2]);
    }
    let stacked: Vec<Vec<f64>> = base[0]
        .iter()
        .zip(&base[1])
        .map(|(p, q)| {
            let p = hybridcast::QuantileForecast::new(levels.clone(), p.clone())?;
            let q = hybridcast::QuantileForecast::new(levels.clone(), q.clone())?;
            Ok(combiner.predict(&p, &q)?.values)
        })
        .collect::<hybridcast::Result<_>>()?;

    let capacity = data.scenario.wind_capacity;
    let trunc = fit_truncation(&stacked[fit], &y[a..b], &levels, Some(capacity))?;
    println!("truncation coefficients: {:?}", trunc.coefficients);
    let capped: Vec<Vec<f64>> = stacked[test.clone()]
        .iter()
        .map(|v| {
            let qf = hybridcast::QuantileForecast::new(levels.clone(), v.clone()).unwrap();
            apply_truncation(&qf, &trunc).values
        })
        .collect();

    let y_test = &y[b..];
    println!("MPL dwd      {:.3}", mpl(y_test, &base[0][test.clone()], &levels)?);
    println!("MPL gfs      {:.3}", mpl(y_test, &base[1][test.clone()], &levels)?);
    println!("MPL stacked  {:.3}", mpl(y_test, &stacked[test], &levels)?);
    println!("MPL capped   {:.3}", mpl(y_test, &capped, &levels)?);
    Ok(())
}
