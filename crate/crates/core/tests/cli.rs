use std::path::Path;
use std::process::{Command, Output};

use hybridcast::dataprep::{Kind, Source};
use hybridcast::io::csv::{read_dataset, read_market, read_quantiles, write_actuals, write_power_forecasts};
use hybridcast::trading::strategy::PowerForecast;

fn hybridcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridcast"))
        .args(args)
        .env("HYBRIDCAST_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hybridcast(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let help = hybridcast(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("backtest"));
    assert_eq!(hybridcast(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hybridcast(&["train", "--loss", "huber", "--data", "x", "--out", "y"]).status.code(), Some(1));
    assert_eq!(hybridcast(&["synth", "--scenario", "no-such", "--out", "x"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let code = hybridcast(&["train", "--data", "/nonexistent/table.csv", "--out", s(&out)]).status.code();
    assert_eq!(code, Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("plain-file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("nested");
    let code = hybridcast(&["synth", "--scenario", "smoke", "--days", "2", "--out", s(&out)]).status.code();
    assert_eq!(code, Some(2));
}

#[test]
fn synth_train_predict_evaluate_backtest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let listed = ok(&["synth", "--scenario", "smoke", "--seed", "3", "--days", "12", "--out", s(d)]);
    assert!(listed.contains("wind_dwd.csv") && listed.contains("market.csv"));

    let cfg = d.join("small.cfg");
    std::fs::write(&cfg, "num_estimators = 20\nmin_data_in_leaf = 10\n").unwrap();
    let data = d.join("wind_dwd.csv");
    let models = d.join("models.json");
    ok(&["train", "--data", s(&data), "--levels", "0.1,0.5,0.9", "--config", s(&cfg), "--out", s(&models)]);
    let mse = d.join("mse.json");
    ok(&["train", "--data", s(&data), "--loss", "mse", "--config", s(&cfg), "--out", s(&mse)]);

    let quantiles = d.join("q.csv");
    ok(&["predict", "--model", s(&models), "--data", s(&data), "--out", s(&quantiles)]);
    let forecasts = read_quantiles(&quantiles).unwrap();
    assert!(!forecasts.is_empty());
    assert!(forecasts.iter().all(|f| f.levels == [0.1, 0.5, 0.9]));

    let ds = read_dataset(&data, Kind::Wind, Source::Dwd).unwrap();
    let actuals: Vec<_> = ds.rows.iter().filter_map(|r| r.target.map(|t| (r.timestamp, t))).collect();
    let actual_path = d.join("actual.csv");
    write_actuals(&actual_path, &actuals).unwrap();
    let scores = ok(&["evaluate", "--forecast", s(&quantiles), "--actual", s(&actual_path)]);
    let mut lines = scores.lines();
    assert_eq!(lines.next(), Some("mpl,mcrps,mws"));
    let values: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));

    let solar = d.join("solar_dwd.csv");
    let solar_models = d.join("solar_models.json");
    let solar_q = d.join("solar_q.csv");
    ok(&["train", "--data", s(&solar), "--levels", "0.1,0.5,0.9", "--config", s(&cfg), "--out", s(&solar_models)]);
    ok(&["predict", "--model", s(&solar_models), "--data", s(&solar), "--out", s(&solar_q)]);
    let total = d.join("total.csv");
    ok(&[
        "aggregate", "--wind", s(&quantiles), "--solar", s(&solar_q), "--levels", "0.25,0.5,0.75",
        "--wind-capacity", "2000", "--solar-capacity", "1000", "--out", s(&total),
    ]);
    let totals_q = read_quantiles(&total).unwrap();
    assert_eq!(totals_q.len(), forecasts.len());
    assert!(totals_q.iter().all(|f| f.levels == [0.25, 0.5, 0.75] && f.is_monotone()));

    let market_path = d.join("market.csv");
    let market = read_market(&market_path).unwrap();
    let power: Vec<PowerForecast> = market
        .iter()
        .map(|r| PowerForecast {
            timestamp: r.timestamp,
            q50: r.actual * 0.95,
            mse: r.actual * 1.02,
        })
        .collect();
    let pf = d.join("power.csv");
    write_power_forecasts(&pf, &power).unwrap();
    let report = d.join("daily.csv");
    let summary = d.join("summary.csv");
    let scatter = d.join("scatter.csv");
    let totals = ok(&[
        "backtest", "--market", s(&market_path), "--forecasts", s(&pf),
        "--strategies", "st-mse,q50,perfect", "--window-days", "5", "--min-history-days", "4",
        "--report", s(&report), "--summary", s(&summary), "--scatter", s(&scatter),
    ]);
    assert_eq!(totals.lines().count(), 3);
    let daily = std::fs::read_to_string(&report).unwrap();
    assert_eq!(daily.lines().count(), 1 + 8 * 3);
    let scatter_rows = std::fs::read_to_string(&scatter).unwrap().lines().count() - 1;
    assert_eq!(scatter_rows, 8 * 48 * 3);
}

#[test]
fn pipeline_lists_its_keys() {
    let keys = ok(&["pipeline", "--config", "unused.cfg", "--list-keys"]);
    for key in ["scenario", "train_fraction", "num_estimators", "postproc", "strategies"] {
        assert!(keys.contains(key), "{key} missing");
    }
}
