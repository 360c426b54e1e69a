//! Turn raw gridded weather forecasts and hourly metering into a
//! half-hourly modelling table.

use chrono::{Duration, TimeZone, Utc};
use hybridcast::dataprep::{prepare, Kind, PrepConfig, Source, WeatherRecord, WIND_SPEED};

fn main() -> hybridcast::Result<()> {
    let issued = Utc.with_ymd_and_hms(2024, 2, 1, 0, 0, 0).unwrap();
    let mut records = Vec::new();
    // One forecast run with hourly steps and four grid points.
    for lead in 20..52 {
        let valid = issued + Duration::hours(lead);
        for point in 0..4 {
            records.push(WeatherRecord {
                reference_time: issued,
                valid_time: valid,
                variable: WIND_SPEED.to_string(),
                point,
                value: 6.0 + (lead as f64 / 5.0).sin() * 3.0 + point as f64 * 0.4,
            });
        }
    }
    let energy: Vec<_> = (0..96)
        .map(|i| {
            let ts = issued + Duration::hours(22) + Duration::minutes(30 * i);
            (ts, 350.0 + 40.0 * (i as f64 / 10.0).sin())
        })
        .collect();

    let mut cfg = PrepConfig::new(Kind::Wind, Source::Dwd);
    cfg.capacity = 1000.0;
    let ds = prepare(&records, &energy, &cfg)?;

    println!("{} rows, columns: {}", ds.len(), ds.columns.join(", "));
    for row in ds.rows.iter().take(4) {
        let feats: Vec<String> = row.features.iter().map(|v| format!("{v:.2}")).collect();
        println!("{}  [{}]  target={:?}", row.timestamp, feats.join(" "), row.target);
    }
    Ok(())
}
