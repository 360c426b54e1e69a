//! Worked examples checked against values worked out by hand or by brute
//! force inside this file, then frozen.

use chrono::{Duration, TimeZone, Utc};
use hybridcast::aggregate::{cdf_from_quantiles, convolve, quantiles_from_cdf, DiscreteDistribution, GridSpec};
use hybridcast::dataprep::{resample_halfhour, spatial_aggregate};
use hybridcast::ensemble::{apply_truncation, pool_adjacent_violators, StackingCombiner, TruncationModel};
use hybridcast::forecast::QuantileForecast;
use hybridcast::gbqr::pinball_negative_gradient;
use hybridcast::harness::oracle::{grid_bid_oracle, mc_sum_quantiles, MIN_DRAWS};
use hybridcast::harness::scenario::{Conditional, CAPACITY_GROWTH};
use hybridcast::harness::search::SearchSpace;
use hybridcast::metrics::{crps, mpl, pinball, winkler};
use hybridcast::postproc::{apply_poly, fit_lasso_qr, PostProcessModel};
use hybridcast::trading::{
    estimate_spread, optimal_bid, period_revenue, trading_loss, MarketRecord, BID_MAX, K,
};
use statrs::distribution::{ContinuousCDF, Normal};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Point mass or uniform law on a fine grid, built directly from its CDF.
fn grid_law(start: f64, delta: f64, size: usize, cdf: impl Fn(f64) -> f64) -> DiscreteDistribution {
    let cdf: Vec<f64> = (0..size).map(|k| cdf(start + k as f64 * delta)).collect();
    let density = (0..size)
        .map(|k| (cdf[k] - if k == 0 { 0.0 } else { cdf[k - 1] }) / delta)
        .collect();
    DiscreteDistribution {
        grid_start: start,
        delta,
        density,
        cdf,
    }
}

#[test]
fn spatial_statistics_by_hand() {
    let s = spatial_aggregate(&[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!((s.mean, s.max, s.min, s.p25, s.p75), (2.5, 4.0, 1.0, 1.75, 3.25));
    let s = spatial_aggregate(&[0.0, 10.0]).unwrap();
    assert_eq!((s.mean, s.max, s.min, s.p25, s.p75), (5.0, 10.0, 0.0, 2.5, 7.5));
    assert!(spatial_aggregate(&[]).is_err());
}

#[test]
fn piecewise_linear_half_hours() {
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let hourly = [(t0, 0.0), (t0 + Duration::hours(1), 4.0), (t0 + Duration::hours(2), 8.0)];
    let half = resample_halfhour(&hourly).unwrap();
    let at = |m: i64| half.iter().find(|(t, _)| *t == t0 + Duration::minutes(m)).unwrap().1;
    assert_eq!(at(30), 2.0);
    assert_eq!(at(90), 6.0);
    assert!(resample_halfhour(&hourly[..1]).is_err());
}

#[test]
fn pinball_values_and_gradients() {
    assert_eq!(pinball(10.0, 8.0, 0.5), 1.0);
    assert!(close(pinball(10.0, 12.0, 0.9), 0.2, 1e-12));
    assert_eq!(pinball(7.0, 7.0, 0.3), 0.0);
    assert_eq!(pinball_negative_gradient(10.0, 8.0, 0.5), 0.5);
    assert!(close(pinball_negative_gradient(5.0, 9.0, 0.9), -0.1, 1e-12));
    assert_eq!(mpl(&[10.0], &[vec![8.0]], &[0.5]).unwrap(), 1.0);
}

#[test]
fn winkler_branches() {
    assert_eq!(winkler(10.0, 20.0, 15.0, 0.2), 10.0);
    assert!(close(winkler(10.0, 20.0, 5.0, 0.2), 60.0, 1e-9));
    assert!(close(winkler(10.0, 20.0, 25.0, 0.2), 60.0, 1e-9));
}

#[test]
fn crps_against_closed_forms() {
    let delta = 0.001;
    // Point mass at 2: CRPS at y is |y − 2|.
    let point = grid_law(0.0, delta, 5001, |x| if x >= 2.0 - 1e-12 { 1.0 } else { 0.0 });
    assert!(close(crps(&point, 2.0), 0.0, 2.0 * delta));
    assert!(close(crps(&point, 3.5), 1.5, 2.0 * delta));
    // Uniform on [0, 1] at y = 0: ∫(1 − x)² dx over [0, 1] = 1/3.
    let uniform = grid_law(0.0, delta, 2001, |x| x.clamp(0.0, 1.0));
    assert!(close(crps(&uniform, 0.0), 1.0 / 3.0, 2.0 * delta));
}

#[test]
fn stacking_and_truncation_by_hand() {
    let combiner = StackingCombiner {
        levels: vec![0.5],
        weights: vec![[0.5, 0.5, 0.0]],
    };
    let a = QuantileForecast::new(vec![0.5], vec![10.0]).unwrap();
    let b = QuantileForecast::new(vec![0.5], vec![20.0]).unwrap();
    assert_eq!(combiner.predict(&a, &b).unwrap().values, vec![15.0]);

    let model = TruncationModel {
        levels: vec![0.5],
        coefficients: vec![0.95],
        capacity: Some(500.0),
    };
    let high = QuantileForecast::new(vec![0.5], vec![600.0]).unwrap();
    let low = QuantileForecast::new(vec![0.5], vec![100.0]).unwrap();
    assert_eq!(apply_truncation(&high, &model).values, vec![475.0]);
    assert_eq!(apply_truncation(&low, &model).values, vec![100.0]);
    let none = TruncationModel::identity(&[0.5]);
    assert_eq!(apply_truncation(&high, &none).values, vec![600.0]);

    let pav = pool_adjacent_violators(&[0.95, 0.92, 0.97]);
    assert!(close(pav[0], 0.935, 1e-12) && close(pav[1], 0.935, 1e-12) && pav[2] == 0.97);
}

#[test]
fn polynomial_correction_and_planted_growth() {
    let model = PostProcessModel {
        levels: vec![0.5],
        coefficients: vec![[1.05, 0.0, 0.0]],
        lambdas: vec![0.0],
        fitted_on: 0,
        capacity: None,
    };
    let f = QuantileForecast::new(vec![0.5], vec![100.0]).unwrap();
    assert!(close(apply_poly(&model, &f).values[0], 105.0, 1e-9));
    let zero = QuantileForecast::new(vec![0.5], vec![0.0]).unwrap();
    assert_eq!(apply_poly(&model, &zero).values[0], 0.0);

    // Capacity grew from 2609 to 2741 MWp; a forecast scaled by that ratio
    // must come back as the linear coefficient.
    assert!(close(CAPACITY_GROWTH, 1.0506, 1e-4));
    let forecast: Vec<f64> = (1..=400).map(|i| i as f64 * 3.1).collect();
    let actual: Vec<f64> = forecast.iter().map(|v| v * CAPACITY_GROWTH).collect();
    let beta = fit_lasso_qr(&forecast, &actual, 0.5, 1e-9).unwrap();
    assert!(close(beta[0], CAPACITY_GROWTH, 1e-3), "{beta:?}");
    assert!(beta[1].abs() < 1e-3 && beta[2].abs() < 1e-3, "{beta:?}");
}

#[test]
fn cdf_ramp_and_inverse() {
    let qf = QuantileForecast::new(vec![0.25, 0.75], vec![1.0, 3.0]).unwrap();
    let grid = GridSpec::covering(1.0, 3.0, 0.01).unwrap();
    let d = cdf_from_quantiles(&qf, grid, (1.0, 3.0)).unwrap();
    assert!(close(d.cdf_at(2.0), 0.5, 0.01));

    let ramp = grid_law(0.0, 1.0, 11, |x| (x / 10.0).clamp(0.0, 1.0));
    assert!(ramp.density[1..].iter().all(|&p| close(p, 0.1, 1e-12)));
    let fine = grid_law(0.0, 0.01, 1001, |x| (x / 10.0).clamp(0.0, 1.0));
    assert!(close(quantiles_from_cdf(&fine, &[0.3])[0], 3.0, 0.01));
}

#[test]
fn uniform_convolution_is_triangular() {
    let delta = 0.005;
    let u = grid_law(0.0, delta, 201, |x| x.clamp(0.0, 1.0));
    let t = convolve(&u, &u).unwrap();
    let triangle = |x: f64| if x <= 1.0 { x } else { 2.0 - x }.max(0.0);
    let worst = (0..t.len())
        .map(|k| (t.density[k] - triangle(t.grid_value(k))).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 4.0 * delta, "sup-norm error {worst}");
    assert!(close(t.mass(), 1.0, 1e-9));
}

#[test]
fn bids_against_grid_enumeration() {
    assert!(close(optimal_bid(500.0, 10.0), 500.0 + 10.0 / 0.14, 1e-9));
    assert!(close(optimal_bid(500.0, 10.0), 571.4, 0.03));
    assert_eq!(optimal_bid(1790.0, 10.0), BID_MAX);
    assert_eq!(optimal_bid(300.0, 0.0), 300.0);
    for (y, e) in [(500.0, 10.0), (1790.0, 10.0), (20.0, -5.0), (1000.0, -30.0)] {
        assert!((optimal_bid(y, e) - grid_bid_oracle(y, e, 0.01).unwrap()).abs() <= 0.01 + 1e-9);
    }
}

#[test]
fn settlement_and_trading_loss_by_hand() {
    assert!(close(period_revenue(90.0, 100.0, 50.0, 40.0), 4893.0, 1e-9));
    assert_eq!(period_revenue(0.0, 0.0, 50.0, 40.0), 0.0);
    assert_eq!(period_revenue(80.0, 80.0, 50.0, 40.0), 80.0 * 50.0);

    assert_eq!(trading_loss(500.0, 500.0, 3.0, 3.0).unwrap(), 0.0);
    assert!(close(trading_loss(510.0, 500.0, 3.0, 3.0).unwrap(), 7.0, 1e-9));
    let expected = 7.0 + 1.0 / (4.0 * K) - 10.0;
    assert!(close(trading_loss(510.0, 500.0, 2.0, 3.0).unwrap(), expected, 1e-9));
    assert!(close(expected, 0.5714, 1e-4));

    // Same number from two settled revenues.
    let (y, spread, ss) = (500.0, 3.0, 40.0);
    let best = optimal_bid(y, spread);
    let bid = optimal_bid(510.0, 2.0);
    let direct = period_revenue(best, y, ss + spread, ss) - period_revenue(bid, y, ss + spread, ss);
    assert!(close(direct, expected, 1e-9));
    assert!(trading_loss(1795.0, 500.0, 10.0, 3.0).is_err());
}

#[test]
fn spread_means_partition() {
    let t0 = Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
    let records: Vec<MarketRecord> = (0..96)
        .map(|i| {
            let spread = if i % 48 < 24 { 10.0 } else { -10.0 };
            MarketRecord {
                timestamp: t0 + Duration::minutes(30 * i),
                da_price: 50.0 + spread,
                ss_price: 50.0,
                actual: 0.0,
            }
        })
        .collect();
    let est = estimate_spread(&records, 96).unwrap();
    assert!((1..=24).all(|t| close(est.mean(t), 10.0, 1e-12)));
    assert!((25..=48).all(|t| close(est.mean(t), -10.0, 1e-12)));
}

#[test]
fn monte_carlo_gaussian_sum() {
    let a = Conditional::ClippedNormal {
        mean: 100.0,
        sd: 15.0,
        lo: -1e9,
        hi: 1e9,
    };
    let b = Conditional::ClippedNormal {
        mean: 50.0,
        sd: 8.0,
        lo: -1e9,
        hi: 1e9,
    };
    let levels = [0.1, 0.5, 0.9];
    let q = mc_sum_quantiles(&a, &b, &levels, MIN_DRAWS * 2, 17).unwrap();
    let exact = Normal::new(150.0, 17.0).unwrap();
    for (t, v) in levels.iter().zip(q) {
        // Standard error of a sample quantile is √(τ(1−τ)/n)/f(q); four of them.
        let se = (t * (1.0 - t) / (2.0 * MIN_DRAWS as f64)).sqrt() / statrs::distribution::Continuous::pdf(&exact, exact.inverse_cdf(*t));
        assert!(close(v, exact.inverse_cdf(*t), 4.0 * se), "τ={t}: {v}");
    }
}

#[test]
fn search_space_ranges() {
    let s = SearchSpace::default();
    assert_eq!(s.learning_rate, (0.01, 0.3));
    assert_eq!(s.max_depth, (3, 12, 1));
    assert_eq!(s.num_leaves, (100, 1000, 100));
    assert_eq!(s.min_data_in_leaf, (200, 10000, 100));
    assert_eq!(s.num_estimators, vec![500, 1000, 2000]);
    assert_eq!(s.lambda_l1, (0, 100, 10));
    assert_eq!(s.lambda_l2, (0, 100, 10));
}
