//! Brute-force references for the aggregation and bidding code. Neither
//! uses the routines it checks: the aggregate oracle samples, the bid
//! oracle enumerates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scenario::{Conditional, TruthRow};
use crate::error::{Error, Result};
use crate::forecast::QuantileForecast;
use crate::trading::{BID_MAX, K};

pub const MIN_DRAWS: usize = 100_000;

/// Empirical quantiles of `draws` (the `⌈τn⌉`-th order statistic), found by
/// successive selection rather than a full sort. Reorders `draws`.
pub fn empirical_quantiles(draws: &mut [f64], levels: &[f64]) -> Vec<f64> {
    let n = draws.len();
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
    let mut out = vec![0.0; levels.len()];
    let mut start = 0;
    for k in order {
        let idx = (((levels[k] * n as f64) - 1e-9).ceil() as usize).clamp(1, n) - 1;
        let idx = idx.max(start);
        let (_, v, _) = draws[start..].select_nth_unstable_by(idx - start, f64::total_cmp);
        out[k] = *v;
        start = idx;
    }
    out
}

/// Monte Carlo quantiles of `wind + solar` with independent draws from the
/// two conditionals.
pub fn mc_sum_quantiles(wind: &Conditional, solar: &Conditional, levels: &[f64], n_draws: usize, seed: u64) -> Result<Vec<f64>> {
    if n_draws < MIN_DRAWS {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo oracle needs at least {MIN_DRAWS} draws, got {n_draws}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<f64> = (0..n_draws).map(|_| wind.sample(&mut rng) + solar.sample(&mut rng)).collect();
    Ok(empirical_quantiles(&mut draws, levels))
}

/// Oracle total-generation quantiles for every truth row. Row `i` uses
/// seed `seed + i`.
pub fn mc_aggregate_oracle(truth: &[TruthRow], levels: &[f64], n_draws: usize, seed: u64) -> Result<Vec<QuantileForecast>> {
    truth
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let values = mc_sum_quantiles(&t.wind, &t.solar, levels, n_draws, seed.wrapping_add(i as u64))?;
            Ok(QuantileForecast {
                timestamp: Some(t.timestamp),
                levels: levels.to_vec(),
                values,
            })
        })
        .collect()
}

/// Expected-revenue objective of a bid, up to terms that do not depend on it.
fn bid_objective(e: f64, yhat: f64, spread_mean: f64) -> f64 {
    e * spread_mean - K * (yhat - e) * (yhat - e)
}

/// Best bid on the grid `{0, step, 2·step, …} ∩ [0, 1800]` by enumeration.
pub fn grid_bid_oracle(yhat: f64, spread_mean: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("grid step must be positive".into()));
    }
    let points = (BID_MAX / step).floor() as u64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..=points {
        let e = k as f64 * step;
        let v = bid_objective(e, yhat, spread_mean);
        if v > best.0 {
            best = (v, e);
        }
    }
    Ok(best.1)
}
