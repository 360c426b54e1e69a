//! Online polynomial correction of solar quantile forecasts.
//!
//! Each level gets `ŷ' = β1·ŷ + β2·ŷ² + β3·ŷ³` (no intercept, so zero stays
//! zero), fitted by LASSO-penalised quantile regression on a rolling window
//! of recent forecasts and actuals. The window grows by one day at a time
//! and the penalty is re-selected on a chronological 60/40 split.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::rearrange_monotone;
use crate::error::{Error, Result};
use crate::forecast::QuantileForecast;
use crate::metrics::pinball;

/// Minimum number of samples for a fit.
pub const MIN_WINDOW: usize = 10;
/// Window length cap, in days.
pub const MAX_WINDOW_DAYS: i64 = 120;
/// Convergence tolerance on the objective.
pub const TOLERANCE: f64 = 1e-8;

/// Per-level cubic coefficients and the penalty chosen for each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostProcessModel {
    pub levels: Vec<f64>,
    pub coefficients: Vec<[f64; 3]>,
    pub lambdas: Vec<f64>,
    pub fitted_on: usize,
    /// Upper clamp for corrected values; `None` leaves them unbounded.
    pub capacity: Option<f64>,
}

impl PostProcessModel {
    pub fn identity(levels: &[f64], capacity: Option<f64>) -> Self {
        Self {
            levels: levels.to_vec(),
            coefficients: vec![[1.0, 0.0, 0.0]; levels.len()],
            lambdas: vec![0.0; levels.len()],
            fitted_on: 0,
            capacity,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::io::load_json(path)
    }

    fn coefficients_for(&self, level: f64) -> [f64; 3] {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() < 1e-12)
            .map_or([1.0, 0.0, 0.0], |i| self.coefficients[i])
    }
}

#[inline]
pub fn poly(beta: [f64; 3], x: f64) -> f64 {
    x * (beta[0] + x * (beta[1] + x * beta[2]))
}

/// Apply the per-level polynomial, clamp to `[0, capacity]` and sort.
/// Levels the model does not know are passed through unchanged.
pub fn apply_poly(model: &PostProcessModel, forecast: &QuantileForecast) -> QuantileForecast {
    let upper = model.capacity.unwrap_or(f64::INFINITY);
    let corrected = forecast.map_values(|i, v| {
        poly(model.coefficients_for(forecast.levels[i]), v).clamp(0.0, upper)
    });
    QuantileForecast {
        values: rearrange_monotone(&corrected.values),
        ..corrected
    }
}

/// `Σ pinball(y, poly(x)) + λ·Σ|γ|` where `γ` are the coefficients of the
/// max-scaled features.
struct Problem<'a> {
    z: [Vec<f64>; 3],
    y: &'a [f64],
    scales: [f64; 3],
    tau: f64,
    lambda: f64,
}

impl<'a> Problem<'a> {
    fn new(x: &[f64], y: &'a [f64], tau: f64, lambda: f64) -> Self {
        let powers = |p: i32| -> Vec<f64> { x.iter().map(|v| v.powi(p)).collect() };
        let raw = [powers(1), powers(2), powers(3)];
        let scales = [0, 1, 2].map(|j| {
            let m = raw[j].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if m > 0.0 { m } else { 1.0 }
        });
        let z = [0, 1, 2].map(|j| raw[j].iter().map(|v| v / scales[j]).collect());
        Self {
            z,
            y,
            scales,
            tau,
            lambda,
        }
    }

    fn residuals(&self, g: [f64; 3]) -> Vec<f64> {
        (0..self.y.len())
            .map(|i| self.y[i] - g[0] * self.z[0][i] - g[1] * self.z[1][i] - g[2] * self.z[2][i])
            .collect()
    }

    fn objective(&self, g: [f64; 3]) -> f64 {
        let loss: f64 = self.residuals(g).iter().map(|&r| pinball(r, 0.0, self.tau)).sum();
        loss + self.lambda * g.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn to_beta(&self, g: [f64; 3]) -> [f64; 3] {
        [g[0] / self.scales[0], g[1] / self.scales[1], g[2] / self.scales[2]]
    }

    /// Majorise-minimise: the pinball kink `|r|` is bounded by a quadratic
    /// touching at the current residual (floored at `h`), which turns each
    /// step into a 3-variable LASSO solved exactly by coordinate descent.
    fn smoothed_solve(&self, start: [f64; 3], h: f64) -> [f64; 3] {
        let n = self.y.len();
        let mut g = start;
        let mut prev = self.objective(g);
        for _ in 0..500 {
            let r = self.residuals(g);
            let mut a = [[0.0; 3]; 3];
            let mut b = [0.0; 3];
            for i in 0..n {
                let w = 1.0 / (4.0 * r[i].abs().max(h));
                for j in 0..3 {
                    let zj = self.z[j][i];
                    b[j] += 2.0 * w * zj * self.y[i] + (self.tau - 0.5) * zj;
                    for k in 0..3 {
                        a[j][k] += 2.0 * w * zj * self.z[k][i];
                    }
                }
            }
            g = lasso_cd(&a, &b, self.lambda, g);
            let obj = self.objective(g);
            if (prev - obj).abs() <= TOLERANCE * prev.abs().max(1e-300) {
                break;
            }
            prev = obj;
        }
        g
    }

    /// Exact minimisation over one coordinate (a weighted quantile problem).
    fn exact_coordinate(&self, g: [f64; 3], j: usize) -> f64 {
        let mut others = g;
        others[j] = 0.0;
        let r = self.residuals(others);
        // Terms w·ρ_t(target − γ): data points, plus the penalty as a
        // median-type term at 0.
        let mut terms: Vec<(f64, f64, f64)> = Vec::with_capacity(r.len() + 1);
        for (i, &ri) in r.iter().enumerate() {
            let zj = self.z[j][i];
            if zj > 0.0 {
                terms.push((ri / zj, zj, self.tau));
            } else if zj < 0.0 {
                terms.push((ri / zj, -zj, 1.0 - self.tau));
            }
        }
        if self.lambda > 0.0 {
            terms.push((0.0, 2.0 * self.lambda, 0.5));
        }
        if terms.is_empty() {
            return g[j];
        }
        terms.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut slope: f64 = -terms.iter().map(|t| t.1 * t.2).sum::<f64>();
        for t in &terms {
            slope += t.1;
            if slope >= 0.0 {
                return t.0;
            }
        }
        terms.last().unwrap().0
    }

    fn polish(&self, start: [f64; 3]) -> [f64; 3] {
        let mut g = start;
        let mut obj = self.objective(g);
        for _ in 0..200 {
            let before = obj;
            for j in 0..3 {
                let mut cand = g;
                cand[j] = self.exact_coordinate(g, j);
                let c = self.objective(cand);
                if c < obj {
                    g = cand;
                    obj = c;
                }
            }
            if before - obj <= TOLERANCE * before.abs().max(1e-300) {
                break;
            }
        }
        g
    }
}

/// Coordinate descent for `½γᵀAγ − bᵀγ + λ‖γ‖₁` in three variables.
fn lasso_cd(a: &[[f64; 3]; 3], b: &[f64; 3], lambda: f64, start: [f64; 3]) -> [f64; 3] {
    let mut g = start;
    for _ in 0..10_000 {
        let mut change = 0.0f64;
        for j in 0..3 {
            if a[j][j] <= 0.0 {
                continue;
            }
            let rho = b[j] - (0..3).filter(|&k| k != j).map(|k| a[j][k] * g[k]).sum::<f64>();
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / a[j][j];
            change = change.max((new - g[j]).abs());
            g[j] = new;
        }
        if change <= 1e-14 * (1.0 + g.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
            break;
        }
    }
    g
}

/// LASSO-penalised quantile regression of `actual` on `(ŷ, ŷ², ŷ³)`.
///
/// Features are divided by their column maximum before fitting, the penalty
/// acts on those scaled coefficients, and the result is mapped back to the
/// raw polynomial. The returned point has the lowest exact objective among
/// the smoothed solution, its exact coordinate polish, the identity, zero
/// and the best purely linear fit.
pub fn fit_lasso_qr(forecast: &[f64], actual: &[f64], tau: f64, lambda: f64) -> Result<[f64; 3]> {
    if forecast.len() != actual.len() {
        return Err(Error::LengthMismatch {
            what: "post-processing forecast vs actual",
            left: forecast.len(),
            right: actual.len(),
        });
    }
    if actual.len() < MIN_WINDOW {
        return Err(Error::WindowTooSmall {
            have: actual.len(),
            need: MIN_WINDOW,
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be ≥ 0")));
    }
    if forecast.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(Error::UncleanDataset("non-finite value in post-processing window".into()));
    }
    let p = Problem::new(forecast, actual, tau, lambda);
    let scale = actual.iter().map(|v| v.abs()).sum::<f64>() / actual.len() as f64;
    let h = 1e-4 * if scale > 0.0 { scale } else { 1.0 };

    let identity = [p.scales[0], 0.0, 0.0];
    let smoothed = p.smoothed_solve(identity, h);
    let polished = p.polish(smoothed);
    let linear = [p.exact_coordinate([0.0; 3], 0), 0.0, 0.0];
    let best = [smoothed, polished, identity, [0.0; 3], linear]
        .into_iter()
        .map(|g| (p.objective(g), g))
        .fold((f64::INFINITY, [0.0; 3]), |acc, cur| if cur.0 < acc.0 { cur } else { acc })
        .1;
    Ok(p.to_beta(best))
}

/// Penalty grid `{0.001, 0.01, 0.1, 1, 10} × mean|actual|`.
pub fn lambda_grid(actual: &[f64]) -> Vec<f64> {
    let m = if actual.is_empty() {
        0.0
    } else {
        actual.iter().map(|v| v.abs()).sum::<f64>() / actual.len() as f64
    };
    [0.001, 0.01, 0.1, 1.0, 10.0].iter().map(|f| f * m).collect()
}

fn mean_pinball_poly(beta: [f64; 3], x: &[f64], y: &[f64], tau: f64) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| pinball(yi, poly(beta, xi), tau)).sum::<f64>() / y.len() as f64
}

/// Choose λ on a chronological 60/40 split (ties go to the smaller λ), then
/// refit on the whole window. Returns `(λ*, β)`.
pub fn select_lambda(forecast: &[f64], actual: &[f64], tau: f64, grid: &[f64]) -> Result<(f64, [f64; 3])> {
    let n = actual.len();
    let n_train = n * 6 / 10;
    if n_train < MIN_WINDOW || n_train == n {
        return Err(Error::WindowTooSmall {
            have: n,
            need: MIN_WINDOW * 10 / 6 + 1,
        });
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("lambda grid"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, sorted[0]);
    for &lambda in &sorted {
        let beta = fit_lasso_qr(&forecast[..n_train], &actual[..n_train], tau, lambda)?;
        let val = mean_pinball_poly(beta, &forecast[n_train..], &actual[n_train..], tau);
        if val < best.0 {
            best = (val, lambda);
        }
    }
    let beta = fit_lasso_qr(forecast, actual, tau, best.1)?;
    Ok((best.1, beta))
}

/// Chronological (forecast, actual) history for one plant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OnlineWindow {
    pub levels: Vec<f64>,
    pub timestamps: Vec<DateTime<Utc>>,
    /// `forecasts[t][k]`: forecast for period `t` at `levels[k]`.
    pub forecasts: Vec<Vec<f64>>,
    pub actuals: Vec<f64>,
    pub max_days: i64,
}

/// One new observation for the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub timestamp: DateTime<Utc>,
    pub forecast: Vec<f64>,
    pub actual: f64,
}

impl OnlineWindow {
    pub fn new(levels: &[f64]) -> Self {
        Self {
            levels: levels.to_vec(),
            max_days: MAX_WINDOW_DAYS,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actuals.is_empty()
    }

    /// Append samples (which must be later than the current end and carry
    /// one value per level), then drop anything older than `max_days`
    /// before the newest sample.
    pub fn extend(&mut self, samples: &[WindowSample]) -> Result<()> {
        for s in samples {
            if self.timestamps.last().is_some_and(|&t| s.timestamp <= t) {
                return Err(Error::InvalidParameter(format!(
                    "sample at {} is not after the window end",
                    s.timestamp
                )));
            }
            if s.forecast.len() != self.levels.len() {
                return Err(Error::LengthMismatch {
                    what: "window sample vs levels",
                    left: s.forecast.len(),
                    right: self.levels.len(),
                });
            }
            self.timestamps.push(s.timestamp);
            self.forecasts.push(s.forecast.clone());
            self.actuals.push(s.actual.max(0.0));
        }
        if let Some(&end) = self.timestamps.last() {
            let cutoff = end - Duration::days(self.max_days);
            let drop = self.timestamps.partition_point(|&t| t <= cutoff);
            self.timestamps.drain(..drop);
            self.forecasts.drain(..drop);
            self.actuals.drain(..drop);
        }
        Ok(())
    }

    pub fn level_column(&self, k: usize) -> Vec<f64> {
        self.forecasts.iter().map(|r| r[k]).collect()
    }
}

/// Select λ and refit every level on the window.
pub fn fit_window(window: &OnlineWindow, capacity: Option<f64>) -> Result<PostProcessModel> {
    let grid = lambda_grid(&window.actuals);
    let fits = (0..window.levels.len())
        .into_par_iter()
        .map(|k| select_lambda(&window.level_column(k), &window.actuals, window.levels[k], &grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(PostProcessModel {
        levels: window.levels.clone(),
        lambdas: fits.iter().map(|f| f.0).collect(),
        coefficients: fits.iter().map(|f| f.1).collect(),
        fitted_on: window.len(),
        capacity,
    })
}

/// A window plus the model currently in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlinePostProcessor {
    pub window: OnlineWindow,
    pub model: PostProcessModel,
}

impl OnlinePostProcessor {
    pub fn new(levels: &[f64], capacity: Option<f64>) -> Self {
        Self {
            window: OnlineWindow::new(levels),
            model: PostProcessModel::identity(levels, capacity),
        }
    }

    /// Append a day of samples and refit. If the refit fails (for example the
    /// window is still too short) the previous model stays in place.
    pub fn rolling_update(&mut self, new_day: &[WindowSample]) -> Result<&PostProcessModel> {
        if new_day.is_empty() {
            return Ok(&self.model);
        }
        self.window.extend(new_day)?;
        match fit_window(&self.window, self.model.capacity) {
            Ok(model) => self.model = model,
            Err(e) => log::debug!("post-processing refit skipped: {e}"),
        }
        Ok(&self.model)
    }

    pub fn set_capacity(&mut self, capacity: Option<f64>) {
        self.model.capacity = capacity;
    }

    pub fn apply(&self, forecast: &QuantileForecast) -> QuantileForecast {
        apply_poly(&self.model, forecast)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(beta: [f64; 3]) -> PostProcessModel {
        PostProcessModel {
            levels: vec![0.5],
            coefficients: vec![beta],
            lambdas: vec![0.0],
            fitted_on: 0,
            capacity: None,
        }
    }

    #[test]
    fn poly_examples() {
        let f = QuantileForecast::new(vec![0.5], vec![100.0]).unwrap();
        assert_eq!(apply_poly(&model([1.0, 0.0, 0.0]), &f).values, vec![100.0]);
        assert!((apply_poly(&model([1.05, 0.0, 0.0]), &f).values[0] - 105.0).abs() < 1e-9);
        let zero = QuantileForecast::new(vec![0.5], vec![0.0]).unwrap();
        assert_eq!(apply_poly(&model([3.0, -2.0, 7.0]), &zero).values, vec![0.0]);
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| 50.0 + 900.0 * ((i * 37 % 101) as f64 / 100.0)).collect()
    }

    #[test]
    fn recovers_linear_scale() {
        let x = ramp(400);
        let y: Vec<f64> = x.iter().map(|v| 2741.0 / 2609.0 * v).collect();
        let beta = fit_lasso_qr(&x, &y, 0.5, 1e-6).unwrap();
        assert!((beta[0] - 2741.0 / 2609.0).abs() < 1e-3, "{beta:?}");
        assert!(beta[1].abs() < 1e-6 && beta[2].abs() < 1e-9);
    }

    #[test]
    fn identity_data_gives_zero_objective() {
        let x = ramp(200);
        let beta = fit_lasso_qr(&x, &x, 0.3, 0.0).unwrap();
        assert!(mean_pinball_poly(beta, &x, &x, 0.3) <= 1e-8);
    }

    #[test]
    fn heavy_penalty_shrinks_to_zero() {
        let x = ramp(200);
        assert_eq!(fit_lasso_qr(&x, &x, 0.5, 1e12).unwrap(), [0.0; 3]);
    }

    #[test]
    fn short_window_is_rejected() {
        assert!(matches!(
            fit_lasso_qr(&[1.0; 5], &[1.0; 5], 0.5, 0.0),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn equal_validation_losses_pick_smallest_lambda() {
        let x = ramp(100);
        let y: Vec<f64> = x.iter().map(|v| 1.1 * v).collect();
        let (lambda, _) = select_lambda(&x, &y, 0.5, &[10.0, 0.1, 1.0]).unwrap();
        assert_eq!(lambda, 0.1);
    }

    #[test]
    fn window_drops_old_samples() {
        let mut w = OnlineWindow::new(&[0.5]);
        w.max_days = 2;
        let t0 = DateTime::from_timestamp(0, 0).unwrap();
        let samples: Vec<WindowSample> = (0..5)
            .map(|d| WindowSample {
                timestamp: t0 + Duration::days(d),
                forecast: vec![1.0],
                actual: 1.0,
            })
            .collect();
        w.extend(&samples).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.extend(&samples[..1]).is_err());
    }
}
