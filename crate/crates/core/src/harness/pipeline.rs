//! The end-to-end driver: train, stack, truncate, post-process, aggregate,
//! evaluate, backtest and write every artifact.
//!
//! Days are split chronologically into three blocks. Base models learn on
//! the first block. Every second-stage fit uses the second block, which
//! also serves as trading warm-up. The last block is evaluated.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::scenario::{generate, Scenario};
use crate::aggregate::{quantile_by_quantile, quantiles_from_cdf, rearrange_monotone, AggregationRoute, Aggregator};
use crate::dataprep::{Dataset, Kind, Source};
use crate::ensemble::{apply_truncation, fit_stacking, fit_truncation, StackingConfig};
use crate::error::{Error, Result};
use crate::forecast::{target_levels, QuantileForecast};
use crate::gbqr::{fit_mse_oriented, QuantileModelSet, TrainConfig};
use crate::io::csv::{read_dataset, read_market, write_power_forecasts};
use crate::io::manifest::RunManifest;
use crate::io::report::{emit_report, MetricRow, QuantileTable, ReportSet};
use crate::metrics::{mcrps, mpl, mws};
use crate::postproc::{OnlinePostProcessor, WindowSample};
use crate::trading::backtest::{backtest, BacktestConfig};
use crate::trading::e2e::ErrorShapingConfig;
use crate::trading::strategy::PowerForecast;
use crate::trading::{MarketRecord, MarketSeries};

/// File names written by `synth` and read back through `data_dir`.
pub const WIND_FILES: [&str; 2] = ["wind_dwd.csv", "wind_gfs.csv"];
pub const SOLAR_FILES: [&str; 2] = ["solar_dwd.csv", "solar_gfs.csv"];
pub const MARKET_FILE: &str = "market.csv";
pub const POWER_FORECAST_FILE: &str = "power_forecasts.csv";

/// Inputs after alignment on common timestamps.
#[derive(Debug, Clone)]
pub struct PipelineData {
    pub wind: [Dataset; 2],
    pub solar: [Dataset; 2],
    pub market: Vec<MarketRecord>,
    pub wind_capacity: f64,
    pub solar_capacity: f64,
    pub inputs: Vec<PathBuf>,
}

fn align(data: &mut PipelineData) -> Result<()> {
    let mut common: BTreeSet<DateTime<Utc>> = data.market.iter().map(|r| r.timestamp).collect();
    for ds in data.wind.iter().chain(&data.solar) {
        let ts: BTreeSet<_> = ds.rows.iter().filter(|r| r.target.is_some()).map(|r| r.timestamp).collect();
        common = common.intersection(&ts).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::EmptyInput("timestamps shared by all inputs"));
    }
    for ds in data.wind.iter_mut().chain(data.solar.iter_mut()) {
        ds.rows.retain(|r| common.contains(&r.timestamp));
    }
    data.market.retain(|r| common.contains(&r.timestamp));
    Ok(())
}

pub fn load_data(cfg: &PipelineConfig) -> Result<PipelineData> {
    let mut data = match &cfg.data_dir {
        Some(dir) => {
            let path = |name: &str| dir.join(name);
            let mut inputs = Vec::new();
            let mut read = |name: &str, kind: Kind, source: Source| {
                inputs.push(path(name));
                read_dataset(&path(name), kind, source)
            };
            let wind = [
                read(WIND_FILES[0], Kind::Wind, Source::Dwd)?,
                read(WIND_FILES[1], Kind::Wind, Source::Gfs)?,
            ];
            let solar = [
                read(SOLAR_FILES[0], Kind::Solar, Source::Dwd)?,
                read(SOLAR_FILES[1], Kind::Solar, Source::Gfs)?,
            ];
            inputs.push(path(MARKET_FILE));
            PipelineData {
                wind,
                solar,
                market: read_market(&path(MARKET_FILE))?,
                wind_capacity: cfg.wind_capacity.expect("validated"),
                solar_capacity: cfg.solar_capacity.expect("validated"),
                inputs,
            }
        }
        None => {
            let mut scenario = Scenario::named(&cfg.scenario, cfg.seed)?;
            if let Some(days) = cfg.days {
                scenario = scenario.with_days(days);
            }
            let synth = generate(&scenario)?;
            PipelineData {
                wind: synth.wind,
                solar: synth.solar,
                market: synth.market.records,
                wind_capacity: cfg.wind_capacity.unwrap_or(scenario.wind_capacity),
                solar_capacity: cfg.solar_capacity.unwrap_or(scenario.final_solar_capacity()),
                inputs: Vec::new(),
            }
        }
    };
    align(&mut data)?;
    Ok(data)
}

/// Row boundaries `(end of block A, end of block B)` on day boundaries.
pub fn split_days(timestamps: &[DateTime<Utc>], train_fraction: f64) -> Result<(usize, usize)> {
    let days: Vec<NaiveDate> = timestamps.iter().map(|t| t.date_naive()).collect();
    let mut distinct = days.clone();
    distinct.dedup();
    let train_days = ((distinct.len() as f64 * train_fraction).round() as usize).min(distinct.len() - 1);
    let a_days = train_days * 2 / 3;
    let b_days = train_days - a_days;
    if a_days < 2 || b_days < 4 || distinct.len() - train_days < 1 {
        return Err(Error::InsufficientHistory(format!(
            "{} days split into {a_days} training, {b_days} tuning and {} evaluation days; need at least 2, 4 and 1",
            distinct.len(),
            distinct.len() - train_days
        )));
    }
    let first_row_of = |day: NaiveDate| days.partition_point(|&d| d < day);
    Ok((first_row_of(distinct[a_days]), first_row_of(distinct[train_days])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub reports: ReportSet,
    pub manifest: RunManifest,
    pub files: Vec<PathBuf>,
    /// Largest `|mass − 1|` over every total distribution built.
    pub max_mass_error: f64,
}

impl PipelineOutput {
    pub fn metric(&self, stage: &str, metric: &str) -> Option<f64> {
        self.reports
            .metrics
            .iter()
            .find(|m| m.stage == stage && m.metric == metric)
            .map(|m| m.value)
    }
}

fn with_timestamps(mut fs: Vec<QuantileForecast>, ds: &Dataset) -> Vec<QuantileForecast> {
    for (f, r) in fs.iter_mut().zip(&ds.rows) {
        f.timestamp = Some(r.timestamp);
    }
    fs
}

fn values_at(fs: &[QuantileForecast], levels: &[f64]) -> Vec<Vec<f64>> {
    fs.iter().map(|f| levels.iter().map(|&t| f.value_at(t)).collect()).collect()
}

fn sorted(f: &QuantileForecast) -> QuantileForecast {
    QuantileForecast {
        values: rearrange_monotone(&f.values),
        ..f.clone()
    }
}

/// Day-sized chunks of a row range, by calendar date.
fn day_chunks(ts: &[DateTime<Utc>], range: std::ops::Range<usize>) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = range.start;
    for i in range.start + 1..=range.end {
        if i == range.end || ts[i].date_naive() != ts[start].date_naive() {
            out.push(start..i);
            start = i;
        }
    }
    out
}

struct Trained {
    /// Forecasts for every row from the start of block B onwards.
    forecasts: Vec<QuantileForecast>,
}

fn train_set(ds: &Dataset, a_end: usize, levels: &[f64], cfg: &TrainConfig) -> Result<Trained> {
    let x = ds.features();
    let y = ds.targets()?;
    let set = QuantileModelSet::train(&x[..a_end], &y[..a_end], &ds.columns, levels, cfg)?;
    let later = ds.slice(a_end..ds.len());
    Ok(Trained {
        forecasts: with_timestamps(set.predict(&x[a_end..])?, &later),
    })
}

/// Run every stage and write reports plus manifest into `cfg.out_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, config_text: &str) -> Result<PipelineOutput> {
    cfg.validate()?;
    let data = load_data(cfg).map_err(|e| e.in_stage("data"))?;
    let ts = data.wind[0].timestamps();
    let (a_end, b_end) = split_days(&ts, cfg.train_fraction).map_err(|e| e.in_stage("data"))?;
    let n = ts.len();
    let nb = b_end - a_end;
    let levels = &cfg.levels;
    let scored = target_levels();
    let train_cfg = TrainConfig {
        rng_seed: cfg.seed,
        ..cfg.train.clone()
    };
    let wind_y = data.wind[0].targets()?;
    let solar_y = data.solar[0].targets()?;

    // Wind: sister models, stacking, truncation.
    let wind_stage = || -> Result<_> {
        let dwd = train_set(&data.wind[0], a_end, levels, &train_cfg)?.forecasts;
        let gfs = train_set(&data.wind[1], a_end, levels, &train_cfg)?.forecasts;
        let vals = |fs: &[QuantileForecast]| fs.iter().map(|f| f.values.clone()).collect::<Vec<_>>();
        let stack_cfg = StackingConfig {
            iterations: cfg.stacking_iterations,
            ..StackingConfig::default()
        };
        let combiner = fit_stacking(&vals(&dwd[..nb]), &vals(&gfs[..nb]), &wind_y[a_end..b_end], levels, &stack_cfg)?;
        let stacked = dwd
            .iter()
            .zip(&gfs)
            .map(|(a, b)| combiner.predict(a, b))
            .collect::<Result<Vec<_>>>()?;
        let trunc = fit_truncation(&vals(&stacked[..nb]), &wind_y[a_end..b_end], levels, Some(data.wind_capacity))?;
        let fin: Vec<QuantileForecast> = stacked.iter().map(|f| sorted(&apply_truncation(f, &trunc))).collect();
        Ok((dwd, gfs, stacked, fin))
    };
    let (wind_dwd, wind_gfs, wind_stacked, wind_final) = wind_stage().map_err(|e| e.in_stage("wind"))?;

    // Solar: offline model, then online post-processing day by day.
    let solar_stage = || -> Result<_> {
        let offline = train_set(&data.solar[0], a_end, levels, &train_cfg)?.forecasts;
        let mut online = offline.clone();
        if cfg.postproc {
            let mut pp = OnlinePostProcessor::new(levels, Some(data.solar_capacity));
            for day in day_chunks(&ts, a_end..n) {
                if day.start >= b_end {
                    for i in day.clone() {
                        online[i - a_end] = pp.apply(&offline[i - a_end]);
                    }
                }
                let samples: Vec<WindowSample> = day
                    .map(|i| WindowSample {
                        timestamp: ts[i],
                        forecast: offline[i - a_end].values.clone(),
                        actual: solar_y[i],
                    })
                    .collect();
                pp.rolling_update(&samples)?;
            }
        }
        Ok((offline, online))
    };
    let (solar_offline, solar_final) = solar_stage().map_err(|e| e.in_stage("solar"))?;

    // Aggregation over blocks B and C.
    let aggregator = Aggregator::for_capacities(data.wind_capacity, data.solar_capacity);
    let mut total = Vec::with_capacity(n - a_end);
    let mut dists = Vec::with_capacity(n - b_end);
    let mut max_mass_error: f64 = 0.0;
    for (k, (w, s)) in wind_final.iter().zip(&solar_final).enumerate() {
        let (w, s) = (sorted(w), sorted(s));
        let (dist, route) = aggregator
            .total_distribution(&w, &s)
            .map_err(|e| e.in_stage("aggregate"))?;
        max_mass_error = max_mass_error.max((dist.mass() - 1.0).abs());
        let values = match route {
            AggregationRoute::Convolution => quantiles_from_cdf(&dist, &scored),
            AggregationRoute::QuantileSum => quantile_by_quantile(&w, &s, &scored).values,
        };
        total.push(QuantileForecast {
            timestamp: Some(ts[a_end + k]),
            levels: scored.clone(),
            values,
        });
        if a_end + k >= b_end {
            dists.push(dist);
        }
    }

    // Evaluation on block C.
    let c = b_end - a_end..n - a_end;
    let wind_c = &wind_y[b_end..];
    let solar_c = &solar_y[b_end..];
    let total_c: Vec<f64> = data.market[b_end..].iter().map(|r| r.actual).collect();
    let mut metrics = Vec::new();
    let mut add_mpl = |stage: &str, fs: &[QuantileForecast], y: &[f64]| -> Result<()> {
        metrics.push(MetricRow::new(stage, "mpl", mpl(y, &values_at(fs, &scored), &scored)?));
        Ok(())
    };
    add_mpl("wind_dwd", &wind_dwd[c.clone()], wind_c)?;
    add_mpl("wind_gfs", &wind_gfs[c.clone()], wind_c)?;
    add_mpl("wind_stacked", &wind_stacked[c.clone()], wind_c)?;
    add_mpl("wind_final", &wind_final[c.clone()], wind_c)?;
    add_mpl("solar_offline", &solar_offline[c.clone()], solar_c)?;
    add_mpl("solar_final", &solar_final[c.clone()], solar_c)?;
    let qbq: Vec<QuantileForecast> = wind_final[c.clone()]
        .iter()
        .zip(&solar_final[c.clone()])
        .map(|(w, s)| quantile_by_quantile(w, s, &scored))
        .collect();
    add_mpl("total_aggregate", &total[c.clone()], &total_c)?;
    add_mpl("total_qbq", &qbq, &total_c)?;
    let interval = |fs: &[QuantileForecast]| -> Result<f64> {
        let lo: Vec<f64> = fs.iter().map(|f| f.value_at(0.1)).collect();
        let hi: Vec<f64> = fs.iter().map(|f| f.value_at(0.9)).collect();
        mws(&lo, &hi, &total_c, 0.2)
    };
    metrics.push(MetricRow::new("total_aggregate", "mws", interval(&total[c.clone()])?));
    metrics.push(MetricRow::new("total_qbq", "mws", interval(&qbq)?));
    metrics.push(MetricRow::new("total_aggregate", "mcrps", mcrps(&dists, &total_c)?));
    metrics.push(MetricRow::new("total_aggregate", "max_mass_error", max_mass_error));

    // Trading: point forecasts, then the walk-forward backtest.
    let trading_stage = || -> Result<_> {
        let point = |ds: &Dataset| -> Result<Vec<f64>> {
            let model = fit_mse_oriented(&ds.slice(0..a_end), &train_cfg)?;
            model.predict(&ds.features()[a_end..])
        };
        let wind_mse = point(&data.wind[0])?;
        let solar_mse = point(&data.solar[0])?;
        let forecasts: Vec<PowerForecast> = (a_end..n)
            .map(|i| PowerForecast {
                timestamp: ts[i],
                q50: total[i - a_end].value_at(0.5),
                mse: (wind_mse[i - a_end].max(0.0) + solar_mse[i - a_end].max(0.0)),
            })
            .collect();
        let market = MarketSeries::new(data.market[a_end..].to_vec())?;
        let bt_cfg = BacktestConfig {
            window_days: cfg.backtest_window_days,
            min_history_days: day_chunks(&ts, a_end..b_end).len(),
            e2e: ErrorShapingConfig {
                hidden: cfg.e2e_hidden,
                epochs: cfg.e2e_epochs,
                seed: cfg.seed,
                ..ErrorShapingConfig::default()
            },
            ..BacktestConfig::default()
        };
        let report = backtest(&cfg.strategies, &market, &forecasts, &bt_cfg)?;
        Ok((forecasts, report))
    };
    let (power_forecasts, bt) = trading_stage().map_err(|e| e.in_stage("trading"))?;

    let reports = ReportSet {
        metrics,
        quantiles: vec![
            QuantileTable {
                name: "wind".into(),
                levels: levels.clone(),
                forecasts: wind_final[c.clone()].to_vec(),
            },
            QuantileTable {
                name: "solar".into(),
                levels: levels.clone(),
                forecasts: solar_final[c.clone()].to_vec(),
            },
            QuantileTable {
                name: "total".into(),
                levels: scored.clone(),
                forecasts: total[c.clone()].to_vec(),
            },
        ],
        backtest: Some(bt),
    };
    let out_dir = &cfg.out_dir;
    let write = || -> Result<_> {
        let mut files = emit_report(&reports, out_dir)?;
        let pf = out_dir.join(POWER_FORECAST_FILE);
        write_power_forecasts(&pf, &power_forecasts[nb..])?;
        files.push(pf);
        let mut manifest = RunManifest::new(config_text, cfg.seed).with_span(ts[0], ts[n - 1]);
        for input in &data.inputs {
            manifest.add_input(input)?;
        }
        manifest.record_outputs(out_dir)?;
        manifest.save(out_dir)?;
        files.push(out_dir.join(crate::io::manifest::MANIFEST_FILE));
        Ok((files, manifest))
    };
    let (files, manifest) = write().map_err(|e| e.in_stage("report"))?;
    Ok(PipelineOutput {
        reports,
        manifest,
        files,
        max_mass_error,
    })
}

/// Write a generated scenario in the layout `data_dir` expects.
pub fn write_synthetic(scenario: &Scenario, out: &Path) -> Result<Vec<PathBuf>> {
    use crate::io::csv::{write_dataset, write_market};
    let data = generate(scenario)?;
    std::fs::create_dir_all(out).map_err(|e| Error::write(out, e))?;
    let mut files = Vec::new();
    for (name, ds) in WIND_FILES.iter().zip(&data.wind).chain(SOLAR_FILES.iter().zip(&data.solar)) {
        let p = out.join(name);
        write_dataset(&p, ds)?;
        files.push(p);
    }
    let p = out.join(MARKET_FILE);
    write_market(&p, &data.market.records)?;
    files.push(p);
    let p = out.join("truth.json");
    crate::io::save_json(&p, &data.truth)?;
    files.push(p);
    let p = out.join("scenario.json");
    crate::io::save_json(&p, scenario)?;
    files.push(p);
    Ok(files)
}
