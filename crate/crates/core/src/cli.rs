//! The `hybridcast` command line.
//!
//! Exit codes: 0 on success, 1 for bad arguments or bad input, 2 for
//! internal and output failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::aggregate::{cdf_from_quantiles, Aggregator, GridSpec};
use crate::dataprep::{prepare, Kind, PrepConfig, Source};
use crate::diagnostics::{fit_anm_residuals, independence_report, DEFAULT_BINS};
use crate::ensemble::{apply_truncation, fit_stacking, fit_truncation, StackingCombiner, StackingConfig, TruncationModel};
use crate::error::{Error, Result};
use crate::forecast::{parse_levels, QuantileForecast};
use crate::gbqr::{fit_boosted, BoostedModel, Loss, QuantileModelSet, TrainConfig};
use crate::harness::config::PipelineConfig;
use crate::harness::pipeline::{run_pipeline, write_synthetic};
use crate::harness::scenario::Scenario;
use crate::io::csv::{
    read_actuals, read_dataset, read_energy, read_market, read_power_forecasts, read_quantiles, read_weather,
    read_window, write_dataset, write_quantiles, write_table,
};
use crate::io::report::{write_daily_revenue, write_revenue_summary, write_scatter};
use crate::metrics::{mcrps, mpl, mws};
use crate::postproc::{apply_poly, OnlineWindow, PostProcessModel};
use crate::trading::backtest::{backtest, BacktestConfig};
use crate::trading::strategy::Strategy;
use crate::trading::MarketSeries;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "HYBRIDCAST_THREADS";

#[derive(Debug, Parser, PartialEq)]
#[command(name = "hybridcast", version, about = "Probabilistic wind and solar forecasting, aggregation and bidding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum Command {
    /// Build a feature table from weather records and metered generation.
    Prep(PrepArgs),
    /// Fit one boosted model, or a quantile model per level with --levels.
    Train(TrainArgs),
    /// Predict quantiles for a feature table with a trained model set.
    Predict(PredictArgs),
    /// Fit or apply the two-source stacking combiner.
    #[command(subcommand)]
    Stack(StackCommand),
    /// Fit or apply capacity-aware truncation.
    #[command(subcommand)]
    Truncate(TruncateCommand),
    /// Fit or apply the solar post-processing model.
    #[command(subcommand)]
    Postproc(PostprocCommand),
    /// Combine wind and solar quantiles into total generation quantiles.
    Aggregate(AggregateArgs),
    /// Score quantile forecasts against observations.
    Evaluate(EvaluateArgs),
    /// Walk-forward trading backtest.
    Backtest(BacktestArgs),
    /// Residual diagnostics.
    #[command(subcommand)]
    Diagnose(DiagnoseCommand),
    /// Write a registered synthetic scenario to disk.
    Synth(SynthArgs),
    /// Run the whole chain from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args, PartialEq)]
pub struct PrepArgs {
    #[arg(long)]
    pub weather: PathBuf,
    #[arg(long)]
    pub energy: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Kind,
    #[arg(long, value_parser = parse_source)]
    pub source: Source,
    #[arg(long, default_value_t = 23.0)]
    pub flt_min: f64,
    #[arg(long, default_value_t = 47.0)]
    pub flt_max: f64,
    /// Targets above this are dropped as metering errors.
    #[arg(long)]
    pub capacity: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, PartialEq)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `pinball:<tau>` or `mse`. Ignored when --levels is given.
    #[arg(long, default_value = "pinball:0.5", value_parser = parse_loss)]
    pub loss: Loss,
    /// Train a model per level: `desk`, `dense`, `lo..hi` or a comma list.
    #[arg(long, value_parser = parse_level_arg)]
    pub levels: Option<::std::vec::Vec<f64>>,
    /// Flat `key = value` file with boosting parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, PartialEq)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum StackCommand {
    Fit {
        #[arg(long)]
        dwd: PathBuf,
        #[arg(long)]
        gfs: PathBuf,
        #[arg(long)]
        actual: PathBuf,
        #[arg(long, default_value_t = 5000)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dwd: PathBuf,
        #[arg(long)]
        gfs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum TruncateCommand {
    Fit {
        #[arg(long)]
        forecast: PathBuf,
        #[arg(long)]
        actual: PathBuf,
        /// Installed capacity in MWh per half-hour.
        #[arg(long)]
        capacity: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        forecast: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum PostprocCommand {
    Fit {
        /// `timestamp,actual,q<level>...` rows, oldest first.
        #[arg(long)]
        window: PathBuf,
        /// Level set the window columns must match.
        #[arg(long, default_value = "dense", value_parser = parse_level_arg)]
        level_set: ::std::vec::Vec<f64>,
        #[arg(long)]
        capacity: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        forecast: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args, PartialEq)]
pub struct AggregateArgs {
    #[arg(long)]
    pub wind: PathBuf,
    #[arg(long)]
    pub solar: PathBuf,
    #[arg(long, default_value = "0.1..0.9", value_parser = parse_level_arg)]
    pub levels: ::std::vec::Vec<f64>,
    #[arg(long)]
    pub wind_capacity: f64,
    #[arg(long)]
    pub solar_capacity: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, PartialEq)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub forecast: PathBuf,
    #[arg(long)]
    pub actual: PathBuf,
    #[arg(long, default_value = "mpl,mcrps,mws")]
    pub metrics: String,
    /// Nominal miscoverage of the central interval scored by mws.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// Upper end of the support used for mcrps; defaults to the largest
    /// forecast or observed value.
    #[arg(long)]
    pub capacity: Option<f64>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, PartialEq)]
pub struct BacktestArgs {
    #[arg(long)]
    pub market: PathBuf,
    /// `timestamp,q50,mse` point forecasts.
    #[arg(long)]
    pub forecasts: PathBuf,
    #[arg(long, default_value = "st-mse,st-q50,q50,naive,persistence,ar,e2e,perfect", value_parser = parse_strategies)]
    pub strategies: ::std::vec::Vec<Strategy>,
    #[arg(long, default_value_t = 60)]
    pub window_days: usize,
    #[arg(long, default_value_t = 7)]
    pub min_history_days: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-day revenue table.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub scatter: Option<PathBuf>,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum DiagnoseCommand {
    /// Mutual information between held-out wind and solar residuals.
    Independence {
        #[arg(long)]
        wind: PathBuf,
        #[arg(long)]
        solar: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 200)]
        perms: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Args, PartialEq)]
pub struct SynthArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, PartialEq)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Print every config key and exit.
    #[arg(long)]
    pub list_keys: bool,
}

fn parse_kind(s: &str) -> std::result::Result<Kind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_source(s: &str) -> std::result::Result<Source, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_level_arg(s: &str) -> std::result::Result<Vec<f64>, String> {
    parse_levels(s).map_err(|e| e.to_string())
}

fn parse_strategies(s: &str) -> std::result::Result<Vec<Strategy>, String> {
    Strategy::parse_list(s).map_err(|e| e.to_string())
}

/// `mse` or `pinball:<tau>`.
pub fn parse_loss(s: &str) -> std::result::Result<Loss, String> {
    let loss = match s.trim() {
        "mse" => Loss::SquaredError,
        other => {
            let tau = other
                .strip_prefix("pinball:")
                .ok_or_else(|| format!("expected `mse` or `pinball:<tau>`, got `{other}`"))?;
            Loss::pinball(tau.parse().map_err(|e| format!("`{tau}`: {e}"))?)
        }
    };
    loss.validate().map_err(|e| e.to_string())?;
    Ok(loss)
}

/// Parse argv (program name first).
pub fn parse<I, T>(argv: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

/// Parse, dispatch and map the outcome to an exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

fn configure_threads() {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::debug!("thread pool already configured: {e}");
            }
        }
        _ => log::warn!("ignoring {THREADS_ENV}={value}: expected a positive integer"),
    }
}

fn train_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(PipelineConfig::default().train),
        Some(p) => Ok(PipelineConfig::load(p)?.0.train),
    }
}

fn aligned_actuals(forecasts: &[QuantileForecast], path: &Path) -> Result<Vec<f64>> {
    let actuals: std::collections::HashMap<_, _> = read_actuals(path)?.into_iter().collect();
    forecasts
        .iter()
        .map(|f| {
            f.timestamp.and_then(|t| actuals.get(&t).copied()).ok_or_else(|| {
                Error::UncleanDataset(format!("no observation for forecast at {:?}", f.timestamp))
            })
        })
        .collect()
}

fn values(fs: &[QuantileForecast]) -> Vec<Vec<f64>> {
    fs.iter().map(|f| f.values.clone()).collect()
}

fn levels_of(fs: &[QuantileForecast]) -> Result<Vec<f64>> {
    fs.first()
        .map(|f| f.levels.clone())
        .ok_or(Error::EmptyInput("quantile forecast file"))
}

fn write_forecasts(path: &Path, fs: &[QuantileForecast]) -> Result<()> {
    write_quantiles(path, &levels_of(fs).unwrap_or_default(), fs)
}

/// Execute one parsed command.
pub fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Prep(a) => {
            let cfg = PrepConfig {
                flt_min: a.flt_min,
                flt_max: a.flt_max,
                capacity: a.capacity.unwrap_or(f64::INFINITY),
                ..PrepConfig::new(a.kind, a.source)
            };
            let ds = prepare(&read_weather(&a.weather)?, &read_energy(&a.energy)?, &cfg)?;
            write_dataset(&a.out, &ds)
        }
        Command::Train(a) => {
            let cfg = train_config(a.config.as_deref())?;
            let ds = read_dataset(&a.data, Kind::Total, Source::Merged)?;
            match &a.levels {
                Some(levels) => QuantileModelSet::train_dataset(&ds, levels, &cfg)?.save(&a.out),
                None => fit_boosted(&ds, a.loss, &cfg)?.save(&a.out),
            }
        }
        Command::Predict(a) => {
            let ds = read_dataset(&a.data, Kind::Total, Source::Merged)?;
            let forecasts = match QuantileModelSet::load(&a.model) {
                Ok(set) => set.predict_dataset(&ds)?,
                Err(_) => {
                    let model = BoostedModel::load(&a.model)?;
                    let level = match model.loss {
                        Loss::Pinball { tau } => tau,
                        Loss::SquaredError => 0.5,
                    };
                    model
                        .predict_dataset(&ds)?
                        .into_iter()
                        .zip(&ds.rows)
                        .map(|(v, r)| QuantileForecast::new(vec![level], vec![v]).map(|f| f.with_timestamp(r.timestamp)))
                        .collect::<Result<_>>()?
                }
            };
            write_forecasts(&a.out, &forecasts)
        }
        Command::Stack(StackCommand::Fit {
            dwd,
            gfs,
            actual,
            iterations,
            out,
        }) => {
            let a = read_quantiles(dwd)?;
            let b = read_quantiles(gfs)?;
            let b_by_ts: std::collections::HashMap<_, _> = b.iter().map(|f| (f.timestamp, f)).collect();
            let (a, b): (Vec<_>, Vec<_>) = a
                .iter()
                .filter_map(|f| b_by_ts.get(&f.timestamp).map(|g| (f.clone(), (*g).clone())))
                .unzip();
            let y = aligned_actuals(&a, actual)?;
            let cfg = StackingConfig {
                iterations: *iterations,
                ..StackingConfig::default()
            };
            fit_stacking(&values(&a), &values(&b), &y, &levels_of(&a)?, &cfg)?.save(out)
        }
        Command::Stack(StackCommand::Apply { model, dwd, gfs, out }) => {
            let combiner = StackingCombiner::load(model)?;
            let a = read_quantiles(dwd)?;
            let b = read_quantiles(gfs)?;
            let b_by_ts: std::collections::HashMap<_, _> = b.iter().map(|f| (f.timestamp, f)).collect();
            let a_ts: std::collections::HashSet<_> = a.iter().map(|f| f.timestamp).collect();
            let mut fs = Vec::new();
            for f in &a {
                fs.push(combiner.predict_partial(Some(f), b_by_ts.get(&f.timestamp).copied())?);
            }
            for g in b.iter().filter(|g| !a_ts.contains(&g.timestamp)) {
                fs.push(combiner.predict_partial(None, Some(g))?);
            }
            fs.sort_by_key(|f| f.timestamp);
            write_forecasts(out, &fs)
        }
        Command::Truncate(TruncateCommand::Fit {
            forecast,
            actual,
            capacity,
            out,
        }) => {
            let fs = read_quantiles(forecast)?;
            let y = aligned_actuals(&fs, actual)?;
            fit_truncation(&values(&fs), &y, &levels_of(&fs)?, *capacity)?.save(out)
        }
        Command::Truncate(TruncateCommand::Apply { model, forecast, out }) => {
            let m = TruncationModel::load(model)?;
            let fs: Vec<_> = read_quantiles(forecast)?.iter().map(|f| apply_truncation(f, &m)).collect();
            write_forecasts(out, &fs)
        }
        Command::Postproc(PostprocCommand::Fit {
            window,
            level_set,
            capacity,
            out,
        }) => {
            let (levels, samples) = read_window(window)?;
            if &levels != level_set {
                return Err(Error::InvalidParameter(format!(
                    "window has {} levels, the requested level set has {}",
                    levels.len(),
                    level_set.len()
                )));
            }
            let mut w = OnlineWindow::new(&levels);
            w.extend(&samples)?;
            crate::postproc::fit_window(&w, *capacity)?.save(out)
        }
        Command::Postproc(PostprocCommand::Apply { model, forecast, out }) => {
            let m = PostProcessModel::load(model)?;
            let fs: Vec<_> = read_quantiles(forecast)?.iter().map(|f| apply_poly(&m, f)).collect();
            write_forecasts(out, &fs)
        }
        Command::Aggregate(a) => {
            let wind = read_quantiles(&a.wind)?;
            let solar: std::collections::HashMap<_, _> =
                read_quantiles(&a.solar)?.into_iter().map(|f| (f.timestamp, f)).collect();
            let agg = Aggregator::for_capacities(a.wind_capacity, a.solar_capacity);
            let mut out = Vec::new();
            for w in &wind {
                match solar.get(&w.timestamp) {
                    Some(s) => out.push(agg.aggregate(w, s, &a.levels)?),
                    None => log::warn!("no solar forecast for {:?}; skipped", w.timestamp),
                }
            }
            write_quantiles(&a.out, &a.levels, &out)
        }
        Command::Evaluate(a) => evaluate(a),
        Command::Backtest(a) => {
            let market = MarketSeries::new(read_market(&a.market)?)?;
            let forecasts = read_power_forecasts(&a.forecasts)?;
            let mut cfg = BacktestConfig {
                window_days: a.window_days,
                min_history_days: a.min_history_days,
                ..BacktestConfig::default()
            };
            cfg.e2e.seed = a.seed;
            let report = backtest(&a.strategies, &market, &forecasts, &cfg)?;
            write_daily_revenue(&a.report, Some(&report))?;
            if let Some(p) = &a.summary {
                write_revenue_summary(p, Some(&report))?;
            }
            if let Some(p) = &a.scatter {
                write_scatter(p, Some(&report))?;
            }
            for s in &report.summaries {
                println!("{:<12} {:>16.2}", s.strategy.name(), s.total_revenue);
            }
            Ok(())
        }
        Command::Diagnose(DiagnoseCommand::Independence {
            wind,
            solar,
            bins,
            perms,
            seed,
            config,
        }) => {
            let cfg = train_config(config.as_deref())?;
            let w = read_dataset(wind, Kind::Wind, Source::Merged)?;
            let s = read_dataset(solar, Kind::Solar, Source::Merged)?;
            let pair = fit_anm_residuals(&w, &s, &cfg)?;
            let r = independence_report(&pair, *bins, *perms, *seed)?;
            println!("samples            {}", r.samples);
            println!("bins               {}", r.bins);
            println!("mutual_information {:.6}", r.mutual_information);
            if let (Some(mean), Some(p), Some(verdict)) = (r.permuted_mean, r.p_value, r.verdict) {
                println!("permuted_mean      {mean:.6}");
                println!("p_value            {p:.4}");
                println!("verdict            {verdict}");
            }
            Ok(())
        }
        Command::Synth(a) => {
            let mut scenario = Scenario::named(&a.scenario, a.seed)?;
            if let Some(days) = a.days {
                scenario = scenario.with_days(days);
            }
            for f in write_synthetic(&scenario, &a.out)? {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Pipeline(a) => {
            if a.list_keys {
                print!("{}", PipelineConfig::help());
                return Ok(());
            }
            let (cfg, text) = PipelineConfig::load(&a.config)?;
            let out = run_pipeline(&cfg, &text)?;
            for m in &out.reports.metrics {
                println!("{:<16} {:<16} {:.6}", m.stage, m.metric, m.value);
            }
            Ok(())
        }
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let fs = read_quantiles(&a.forecast)?;
    let levels = levels_of(&fs)?;
    let y = aligned_actuals(&fs, &a.actual)?;
    let mut header = Vec::new();
    let mut row = Vec::new();
    for metric in a.metrics.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        let value = match metric {
            "mpl" => mpl(&y, &values(&fs), &levels)?,
            "mws" => {
                let lo: Vec<f64> = fs.iter().map(|f| f.value_at(a.alpha / 2.0)).collect();
                let hi: Vec<f64> = fs.iter().map(|f| f.value_at(1.0 - a.alpha / 2.0)).collect();
                mws(&lo, &hi, &y, a.alpha)?
            }
            "mcrps" => {
                let top = a.capacity.unwrap_or_else(|| {
                    fs.iter()
                        .flat_map(|f| f.values.iter().copied())
                        .chain(y.iter().copied())
                        .fold(0.0, f64::max)
                });
                let support = (0.0, top.max(1e-9));
                let grid = GridSpec::covering(support.0, support.1, support.1 / 2048.0)?;
                let dists = fs
                    .iter()
                    .map(|f| match cdf_from_quantiles(f, grid, support) {
                        Err(Error::GridResolution(_)) => {
                            let mid = f.value_at(0.5);
                            cdf_from_quantiles(&f.map_values(|_, _| mid), grid, support)
                        }
                        other => other,
                    })
                    .collect::<Result<Vec<_>>>()?;
                mcrps(&dists, &y)?
            }
            other => return Err(Error::parse("metrics", format!("unknown metric `{other}`"))),
        };
        header.push(metric);
        row.push(value.to_string());
    }
    match &a.out {
        Some(p) => write_table(p, &header, &[row]),
        None => {
            println!("{}", header.join(","));
            println!("{}", row.join(","));
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_invocation_round_trips() {
        let cli = parse(["hybridcast", "pipeline", "--config", "run.cfg"]).unwrap();
        assert_eq!(
            cli.command,
            Command::Pipeline(PipelineArgs {
                config: PathBuf::from("run.cfg"),
                list_keys: false,
            })
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["hybridcast", "--help"]), 0);
        assert_eq!(run(["hybridcast", "frobnicate"]), 1);
        assert_eq!(run(["hybridcast", "synth", "--scenario", "smoke", "--bogus", "x"]), 1);
        assert_eq!(run(["hybridcast", "pipeline", "--config", "/nonexistent/run.cfg"]), 1);
    }

    #[test]
    fn loss_flags() {
        assert_eq!(parse_loss("mse").unwrap(), Loss::SquaredError);
        assert_eq!(parse_loss("pinball:0.9").unwrap(), Loss::pinball(0.9));
        assert!(parse_loss("pinball:1.5").is_err());
        assert!(parse_loss("huber").is_err());
    }
}
