//! Report emission: metric tables, revenue tables, the error scatter and
//! quantile forecasts, all as CSV.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv::{format_timestamp, write_quantiles, write_table};
use crate::error::{Error, Result};
use crate::forecast::QuantileForecast;
use crate::trading::backtest::BacktestReport;

pub const METRICS_FILE: &str = "metrics.csv";
pub const DAILY_REVENUE_FILE: &str = "revenue_daily.csv";
pub const REVENUE_SUMMARY_FILE: &str = "revenue_summary.csv";
pub const SCATTER_FILE: &str = "error_scatter.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Where the forecast came from, e.g. `wind_stacked` or `total_aggregate`.
    pub stage: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(stage: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        Self {
            stage: stage.into(),
            metric: metric.into(),
            value,
        }
    }
}

/// A named quantile table, written as `quantiles_<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub name: String,
    pub levels: Vec<f64>,
    pub forecasts: Vec<QuantileForecast>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub metrics: Vec<MetricRow>,
    pub quantiles: Vec<QuantileTable>,
    pub backtest: Option<BacktestReport>,
}

pub fn write_metrics(path: &Path, metrics: &[MetricRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|m| vec![m.stage.clone(), m.metric.clone(), m.value.to_string()])
        .collect();
    write_table(path, &["stage", "metric", "value"], &rows)
}

pub fn write_daily_revenue(path: &Path, report: Option<&BacktestReport>) -> Result<()> {
    let mut rows = Vec::new();
    if let Some(r) = report {
        for day in &r.days {
            for (s, rev) in r.strategies.iter().zip(&day.revenues) {
                rows.push(vec![day.date.to_string(), s.to_string(), rev.to_string()]);
            }
        }
    }
    write_table(path, &["date", "strategy", "revenue"], &rows)
}

pub fn write_revenue_summary(path: &Path, report: Option<&BacktestReport>) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .map(|r| {
            r.summaries
                .iter()
                .map(|s| {
                    vec![
                        s.strategy.to_string(),
                        s.total_revenue.to_string(),
                        s.trading_loss.to_string(),
                        s.power_term.to_string(),
                        s.spread_term.to_string(),
                        s.cross_term.to_string(),
                        s.periods.to_string(),
                    ]
                })
                .collect()
        })
        .unwrap_or_default();
    write_table(
        path,
        &[
            "strategy",
            "total_revenue",
            "trading_loss",
            "power_term",
            "spread_term",
            "cross_term",
            "periods",
        ],
        &rows,
    )
}

/// One row per evaluated period and strategy.
pub fn write_scatter(path: &Path, report: Option<&BacktestReport>) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .map(|r| {
            r.scatter
                .iter()
                .map(|p| {
                    vec![
                        format_timestamp(p.timestamp),
                        p.strategy.to_string(),
                        p.power_error.to_string(),
                        p.spread_error.to_string(),
                        p.loss.to_string(),
                    ]
                })
                .collect()
        })
        .unwrap_or_default();
    write_table(path, &["timestamp", "strategy", "power_error", "spread_error", "loss"], &rows)
}

/// Write every report file into `out_dir`, creating it if needed, and
/// return the paths written.
pub fn emit_report(results: &ReportSet, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::write(out_dir, e))?;
    let mut written = Vec::new();
    let mut path = |name: &str| {
        let p = out_dir.join(name);
        written.push(p.clone());
        p
    };
    write_metrics(&path(METRICS_FILE), &results.metrics)?;
    let bt = results.backtest.as_ref();
    write_daily_revenue(&path(DAILY_REVENUE_FILE), bt)?;
    write_revenue_summary(&path(REVENUE_SUMMARY_FILE), bt)?;
    write_scatter(&path(SCATTER_FILE), bt)?;
    for table in &results.quantiles {
        write_quantiles(&path(&format!("quantiles_{}.csv", table.name)), &table.levels, &table.forecasts)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_results_give_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&ReportSet::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        for f in files {
            let text = std::fs::read_to_string(&f).unwrap();
            assert_eq!(text.lines().count(), 1, "{}", f.display());
        }
    }
}
