//! CSV readers and writers for every interchange table.
//!
//! All tables have a header row, use `.` as the decimal separator and write
//! timestamps as RFC 3339 UTC with a `Z` suffix. Floats are written in their
//! shortest round-trip form, so re-emitting the same values gives identical
//! bytes.

use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use csv::{ReaderBuilder, StringRecord, Writer};

use crate::dataprep::{Dataset, FeatureRow, Kind, Source, WeatherRecord};
use crate::error::{Error, Result};
use crate::forecast::{level_header, QuantileForecast};
use crate::postproc::WindowSample;
use crate::trading::strategy::PowerForecast;
use crate::trading::MarketRecord;

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::parse("timestamp", format!("`{s}`: {e}")))
}

fn parse_f64(s: &str, context: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::parse(context.to_string(), format!("`{s}`: {e}")))
}

fn open(path: &Path) -> Result<(StringRecord, Vec<StringRecord>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::read(path, e))?;
    let mut rdr = ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers()?.clone();
    let rows = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn writer(path: &Path) -> Result<Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::write(path, e))?;
    Ok(Writer::from_writer(file))
}

fn finish(mut w: Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::write(path, e))
}

fn expect_header(header: &StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if found != expected {
        return Err(Error::SchemaMismatch {
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    Ok(())
}

/// Quantile table `timestamp,q0.1,...`; levels come from the header.
pub fn read_quantiles(path: &Path) -> Result<Vec<QuantileForecast>> {
    let (header, rows) = open(path)?;
    if header.get(0).map(str::trim) != Some("timestamp") {
        return Err(Error::parse(path.display().to_string(), "first column must be `timestamp`"));
    }
    let levels = header
        .iter()
        .skip(1)
        .map(|h| {
            h.trim()
                .strip_prefix('q')
                .ok_or_else(|| Error::parse("quantile header", format!("`{h}` is not of the form q<level>")))
                .and_then(|l| parse_f64(l, "quantile header"))
        })
        .collect::<Result<Vec<f64>>>()?;
    rows.iter()
        .map(|r| {
            let ts = parse_timestamp(&r[0])?;
            let values = r.iter().skip(1).map(|v| parse_f64(v, "quantile value")).collect::<Result<Vec<_>>>()?;
            Ok(QuantileForecast::new(levels.clone(), values)?.with_timestamp(ts))
        })
        .collect()
}

/// Write quantile rows. `levels` sets the header, so an empty slice still
/// produces a well-formed file.
pub fn write_quantiles(path: &Path, levels: &[f64], forecasts: &[QuantileForecast]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(levels.iter().map(|&l| level_header(l)));
    w.write_record(&header)?;
    for f in forecasts {
        if f.levels != levels {
            return Err(Error::InvalidParameter("forecast levels differ from file header".into()));
        }
        let ts = f
            .timestamp
            .ok_or_else(|| Error::InvalidParameter("quantile forecast without timestamp".into()))?;
        let mut rec = vec![format_timestamp(ts)];
        rec.extend(f.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub const MARKET_HEADER: [&str; 4] = ["timestamp", "da_price", "ss_price", "actual"];

pub fn read_market(path: &Path) -> Result<Vec<MarketRecord>> {
    let (header, rows) = open(path)?;
    expect_header(&header, &MARKET_HEADER)?;
    rows.iter()
        .map(|r| {
            Ok(MarketRecord {
                timestamp: parse_timestamp(&r[0])?,
                da_price: parse_f64(&r[1], "da_price")?,
                ss_price: parse_f64(&r[2], "ss_price")?,
                actual: parse_f64(&r[3], "actual")?,
            })
        })
        .collect()
}

pub fn write_market(path: &Path, records: &[MarketRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(MARKET_HEADER)?;
    for r in records {
        w.write_record([
            format_timestamp(r.timestamp),
            r.da_price.to_string(),
            r.ss_price.to_string(),
            r.actual.to_string(),
        ])?;
    }
    finish(w, path)
}

fn read_series(path: &Path, column: &str) -> Result<Vec<(DateTime<Utc>, f64)>> {
    let (header, rows) = open(path)?;
    expect_header(&header, &["timestamp", column])?;
    rows.iter()
        .map(|r| Ok((parse_timestamp(&r[0])?, parse_f64(&r[1], column)?)))
        .collect()
}

fn write_series(path: &Path, column: &str, series: &[(DateTime<Utc>, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["timestamp", column])?;
    for (ts, v) in series {
        w.write_record([format_timestamp(*ts), v.to_string()])?;
    }
    finish(w, path)
}

/// Observed values, `timestamp,actual`.
pub fn read_actuals(path: &Path) -> Result<Vec<(DateTime<Utc>, f64)>> {
    read_series(path, "actual")
}

pub fn write_actuals(path: &Path, series: &[(DateTime<Utc>, f64)]) -> Result<()> {
    write_series(path, "actual", series)
}

/// Half-hourly generation, `timestamp,target`.
pub fn read_energy(path: &Path) -> Result<Vec<(DateTime<Utc>, f64)>> {
    read_series(path, "target")
}

pub fn write_energy(path: &Path, series: &[(DateTime<Utc>, f64)]) -> Result<()> {
    write_series(path, "target", series)
}

pub const WEATHER_HEADER: [&str; 5] = ["reference_time", "valid_time", "variable", "point", "value"];

/// Long-format weather table, one grid point value per row.
pub fn read_weather(path: &Path) -> Result<Vec<WeatherRecord>> {
    let (header, rows) = open(path)?;
    expect_header(&header, &WEATHER_HEADER)?;
    rows.iter()
        .map(|r| {
            Ok(WeatherRecord {
                reference_time: parse_timestamp(&r[0])?,
                valid_time: parse_timestamp(&r[1])?,
                variable: r[2].trim().to_string(),
                point: r[3]
                    .trim()
                    .parse()
                    .map_err(|e| Error::parse("point", format!("`{}`: {e}", &r[3])))?,
                value: parse_f64(&r[4], "value")?,
            })
        })
        .collect()
}

pub fn write_weather(path: &Path, records: &[WeatherRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(WEATHER_HEADER)?;
    for r in records {
        w.write_record([
            format_timestamp(r.reference_time),
            format_timestamp(r.valid_time),
            r.variable.clone(),
            r.point.to_string(),
            r.value.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Modelling table `timestamp,<features...>,target`. An empty target cell
/// marks a row without an observation.
pub fn read_dataset(path: &Path, kind: Kind, source: Source) -> Result<Dataset> {
    let (header, rows) = open(path)?;
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if names.len() < 2 || names[0] != "timestamp" || names[names.len() - 1] != "target" {
        return Err(Error::parse(
            path.display().to_string(),
            "dataset header must be `timestamp,<features...>,target`",
        ));
    }
    let columns = names[1..names.len() - 1].to_vec();
    let rows = rows
        .iter()
        .map(|r| {
            let last = r.len() - 1;
            let features = (1..last).map(|i| parse_f64(&r[i], &names[i])).collect::<Result<Vec<_>>>()?;
            let target = match r[last].trim() {
                "" => None,
                v => Some(parse_f64(v, "target")?),
            };
            Ok(FeatureRow {
                timestamp: parse_timestamp(&r[0])?,
                reference_time: None,
                features,
                target,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(columns, rows, kind, source)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(ds.columns.iter().cloned());
    header.push("target".into());
    w.write_record(&header)?;
    for r in &ds.rows {
        let mut rec = vec![format_timestamp(r.timestamp)];
        rec.extend(r.features.iter().map(|v| v.to_string()));
        rec.push(r.target.map(|t| t.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub const POWER_FORECAST_HEADER: [&str; 3] = ["timestamp", "q50", "mse"];

/// Point forecasts for trading, `timestamp,q50,mse`.
pub fn read_power_forecasts(path: &Path) -> Result<Vec<PowerForecast>> {
    let (header, rows) = open(path)?;
    expect_header(&header, &POWER_FORECAST_HEADER)?;
    rows.iter()
        .map(|r| {
            Ok(PowerForecast {
                timestamp: parse_timestamp(&r[0])?,
                q50: parse_f64(&r[1], "q50")?,
                mse: parse_f64(&r[2], "mse")?,
            })
        })
        .collect()
}

pub fn write_power_forecasts(path: &Path, forecasts: &[PowerForecast]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(POWER_FORECAST_HEADER)?;
    for f in forecasts {
        w.write_record([format_timestamp(f.timestamp), f.q50.to_string(), f.mse.to_string()])?;
    }
    finish(w, path)
}

/// Post-processing window, `timestamp,actual,q<level>...`.
pub fn read_window(path: &Path) -> Result<(Vec<f64>, Vec<WindowSample>)> {
    let (header, rows) = open(path)?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 3 || names[0] != "timestamp" || names[1] != "actual" {
        return Err(Error::parse(
            path.display().to_string(),
            "window header must be `timestamp,actual,q<level>...`",
        ));
    }
    let levels = names[2..]
        .iter()
        .map(|h| {
            h.strip_prefix('q')
                .ok_or_else(|| Error::parse("quantile header", format!("`{h}` is not of the form q<level>")))
                .and_then(|l| parse_f64(l, "quantile header"))
        })
        .collect::<Result<Vec<f64>>>()?;
    let samples = rows
        .iter()
        .map(|r| {
            Ok(WindowSample {
                timestamp: parse_timestamp(&r[0])?,
                actual: parse_f64(&r[1], "actual")?,
                forecast: r.iter().skip(2).map(|v| parse_f64(v, "quantile value")).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((levels, samples))
}

pub fn write_window(path: &Path, levels: &[f64], samples: &[WindowSample]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["timestamp".to_string(), "actual".to_string()];
    header.extend(levels.iter().map(|&l| level_header(l)));
    w.write_record(&header)?;
    for s in samples {
        let mut rec = vec![format_timestamp(s.timestamp), s.actual.to_string()];
        rec.extend(s.forecast.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// Write an arbitrary table of already formatted cells.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn timestamps_round_trip() {
        let t = Utc.with_ymd_and_hms(2024, 2, 29, 23, 30, 0).unwrap();
        assert_eq!(format_timestamp(t), "2024-02-29T23:30:00Z");
        assert_eq!(parse_timestamp("2024-02-29T23:30:00Z").unwrap(), t);
        assert_eq!(parse_timestamp("2024-02-29T23:30:00+00:00").unwrap(), t);
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn quantiles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.csv");
        let t = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let levels = vec![0.1, 0.5, 0.9];
        let f = QuantileForecast::new(levels.clone(), vec![1.0, 2.5, 1e-17]).unwrap().with_timestamp(t);
        write_quantiles(&p, &levels, std::slice::from_ref(&f)).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().next().unwrap(), "timestamp,q0.1,q0.5,q0.9");
        assert_eq!(read_quantiles(&p).unwrap(), vec![f]);
    }

    #[test]
    fn market_header_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "timestamp,price\n").unwrap();
        assert!(matches!(read_market(&p), Err(Error::SchemaMismatch { .. })));
    }
}
