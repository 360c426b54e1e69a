//! Non-parametric aggregation of component quantile forecasts.
//!
//! Each component's dense quantiles are turned into a piecewise-linear CDF on
//! a uniform grid, differenced into a density, convolved with the other
//! component's density (conditional independence), and the total CDF is
//! inverted at the requested levels.
//!
//! Grid convention: the mass stored at grid point `k` is the probability of
//! the cell `(y[k-1], y[k]]`, so `cdf[k]` is the exact CDF value at `y[k]` and
//! the CDF is linear between grid points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::forecast::QuantileForecast;

/// Resolution used when none is given: total capacity split in 2048 cells.
pub const DEFAULT_CELLS: usize = 2048;

/// Density and CDF on the uniform grid `grid_start + k·delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub grid_start: f64,
    pub delta: f64,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    #[inline]
    pub fn grid_value(&self, k: usize) -> f64 {
        self.grid_start + k as f64 * self.delta
    }

    pub fn grid_end(&self) -> f64 {
        self.grid_value(self.len().saturating_sub(1))
    }

    /// `Σ density · Δy`.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.delta
    }

    pub fn mean(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(k, &d)| d * self.delta * self.grid_value(k))
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.density
            .iter()
            .enumerate()
            .map(|(k, &d)| d * self.delta * (self.grid_value(k) - m).powi(2))
            .sum()
    }

    /// CDF value at an arbitrary point, linear between grid points.
    pub fn cdf_at(&self, y: f64) -> f64 {
        if y < self.grid_start {
            return 0.0;
        }
        let pos = (y - self.grid_start) / self.delta;
        let k = pos.floor() as usize;
        if k + 1 >= self.len() {
            return 1.0;
        }
        let w = pos - k as f64;
        self.cdf[k] + w * (self.cdf[k + 1] - self.cdf[k])
    }

    pub fn quantiles(&self, levels: &[f64]) -> Vec<f64> {
        quantiles_from_cdf(self, levels)
    }

    /// Check the probabilistic invariants: unit mass, monotone CDF in [0, 1]
    /// ending at 1, and CDF equal to the running density sum.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let mass = self.mass();
        if (mass - 1.0).abs() > tol {
            return Err(Error::InvalidParameter(format!("mass {mass} differs from 1")));
        }
        if self.density.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            return Err(Error::InvalidParameter("negative or non-finite density".into()));
        }
        let last = *self.cdf.last().unwrap_or(&0.0);
        if (last - 1.0).abs() > tol {
            return Err(Error::InvalidParameter(format!("cdf ends at {last}")));
        }
        if self.cdf.windows(2).any(|w| w[1] < w[0]) || self.cdf.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(Error::InvalidParameter("cdf not monotone in [0,1]".into()));
        }
        let mut acc = 0.0;
        for (d, f) in self.density.iter().zip(&self.cdf) {
            acc += d * self.delta;
            if (acc - f).abs() > tol {
                return Err(Error::InvalidParameter("cdf inconsistent with density".into()));
            }
        }
        Ok(())
    }
}

/// Uniform evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub delta: f64,
    pub size: usize,
}

impl GridSpec {
    /// Smallest grid starting at `lo` with step `delta` whose last point is
    /// at or beyond `hi`.
    pub fn covering(lo: f64, hi: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !(hi >= lo) {
            return Err(Error::InvalidParameter(format!(
                "bad grid: [{lo}, {hi}] step {delta}"
            )));
        }
        let cells = ((hi - lo) / delta - 1e-9).ceil().max(0.0) as usize;
        Ok(Self {
            start: lo,
            delta,
            size: cells + 1,
        })
    }

    #[inline]
    pub fn value(&self, k: usize) -> f64 {
        self.start + k as f64 * self.delta
    }

    pub fn end(&self) -> f64 {
        self.value(self.size - 1)
    }
}

/// Repair quantile crossing by sorting (monotone rearrangement).
pub fn rearrange_monotone(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// Piecewise-linear CDF through the knots `(value_i, τ_i)`, ramping linearly
/// from `(support.0, 0)` below the first quantile and up to `(support.1, 1)`
/// above the last. Equal knot values produce a jump (point mass).
///
/// Errors when the forecast has a non-zero spread that covers fewer than
/// three grid points; an exactly degenerate forecast is a point mass.
pub fn cdf_from_quantiles(
    qf: &QuantileForecast,
    grid: GridSpec,
    support: (f64, f64),
) -> Result<DiscreteDistribution> {
    let (lo, hi) = support;
    if !(hi >= lo) {
        return Err(Error::InvalidParameter(format!("bad support [{lo}, {hi}]")));
    }
    if grid.start > lo + 1e-9 * grid.delta || grid.end() < hi - 1e-9 * grid.delta {
        return Err(Error::GridResolution(format!(
            "grid [{}, {}] does not cover support [{lo}, {hi}]",
            grid.start,
            grid.end()
        )));
    }
    if qf.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite quantile value".into()));
    }
    let values: Vec<f64> = rearrange_monotone(&qf.values)
        .into_iter()
        .map(|v| v.clamp(lo, hi))
        .collect();

    let first = values[0];
    let last = *values.last().unwrap();
    if last > first {
        let inside = (0..grid.size)
            .map(|k| grid.value(k))
            .filter(|&y| y >= first && y <= last)
            .count();
        if inside < 3 {
            return Err(Error::GridResolution(format!(
                "only {inside} grid points between {first} and {last} (step {})",
                grid.delta
            )));
        }
    }

    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(values.len() + 2);
    if first > lo {
        knots.push((lo, 0.0));
    }
    knots.extend(values.iter().copied().zip(qf.levels.iter().copied()));
    if last < hi {
        knots.push((hi, 1.0));
    }

    let cdf: Vec<f64> = (0..grid.size)
        .map(|k| {
            let y = grid.value(k);
            let upto = knots.partition_point(|&(v, _)| v <= y);
            if upto == 0 {
                0.0
            } else if upto == knots.len() {
                1.0
            } else {
                let (v0, t0) = knots[upto - 1];
                let (v1, t1) = knots[upto];
                t0 + (y - v0) / (v1 - v0) * (t1 - t0)
            }
        })
        .collect();

    let raw = DiscreteDistribution {
        grid_start: grid.start,
        delta: grid.delta,
        density: Vec::new(),
        cdf,
    };
    Ok(pdf_from_cdf(&raw))
}

/// Density by differencing the CDF (`(F[k] − F[k−1]) / Δy`, with
/// `F[−1] = 0`); negative values are clipped and the result renormalised to
/// unit mass. The returned CDF is the running sum of the new density.
pub fn pdf_from_cdf(dist: &DiscreteDistribution) -> DiscreteDistribution {
    let delta = dist.delta;
    let mut prev = 0.0;
    let mut density: Vec<f64> = dist
        .cdf
        .iter()
        .map(|&f| {
            let d = ((f - prev) / delta).max(0.0);
            prev = f;
            d
        })
        .collect();
    let mass: f64 = density.iter().sum::<f64>() * delta;
    if mass > 0.0 {
        density.iter_mut().for_each(|d| *d /= mass);
    } else if let Some(last) = density.last_mut() {
        *last = 1.0 / delta;
    }
    cdf_from_pdf(&DiscreteDistribution {
        grid_start: dist.grid_start,
        delta,
        density,
        cdf: Vec::new(),
    })
}

/// Running sum of the density times Δy; the final value is set to exactly 1.
pub fn cdf_from_pdf(dist: &DiscreteDistribution) -> DiscreteDistribution {
    let delta = dist.delta;
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = dist
        .density
        .iter()
        .map(|&d| {
            acc += d * delta;
            acc.min(1.0)
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    DiscreteDistribution {
        grid_start: dist.grid_start,
        delta,
        density: dist.density.clone(),
        cdf,
    }
}

/// Density of the sum of two independent variables by direct discrete
/// convolution. Both grids must share the same step.
pub fn convolve(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<DiscreteDistribution> {
    let delta = a.delta;
    if (a.delta - b.delta).abs() > 1e-12 * a.delta.max(b.delta) {
        return Err(Error::InvalidParameter(format!(
            "grid step mismatch: {} vs {}",
            a.delta, b.delta
        )));
    }
    if a.density.is_empty() || b.density.is_empty() {
        return Err(Error::EmptyInput("convolution operand"));
    }
    let mut out = vec![0.0; a.density.len() + b.density.len() - 1];
    for (i, &fa) in a.density.iter().enumerate() {
        if fa == 0.0 {
            continue;
        }
        let scale = fa * delta;
        for (o, &fb) in out[i..i + b.density.len()].iter_mut().zip(&b.density) {
            *o += scale * fb;
        }
    }
    Ok(cdf_from_pdf(&DiscreteDistribution {
        grid_start: a.grid_start + b.grid_start,
        delta,
        density: out,
        cdf: Vec::new(),
    }))
}

/// Generalised inverse `inf{y : F(y) ≥ q}` with linear interpolation inside
/// the crossing cell.
pub fn quantiles_from_cdf(dist: &DiscreteDistribution, levels: &[f64]) -> Vec<f64> {
    let cdf = &dist.cdf;
    levels
        .iter()
        .map(|&q| {
            let k = cdf.partition_point(|&f| f < q);
            if k == 0 {
                dist.grid_start
            } else if k >= cdf.len() {
                dist.grid_end()
            } else {
                let (f0, f1) = (cdf[k - 1], cdf[k]);
                let w = if f1 > f0 { (q - f0) / (f1 - f0) } else { 1.0 };
                dist.grid_value(k - 1) + w * dist.delta
            }
        })
        .collect()
}

/// Settings for wind + solar aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregator {
    pub delta: f64,
    pub wind_support: (f64, f64),
    pub solar_support: (f64, f64),
}

/// How a total forecast was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregationRoute {
    Convolution,
    /// One component is near-degenerate: totals are per-level sums.
    QuantileSum,
}

impl Aggregator {
    /// Supports `[0, capacity]` and `Δy = (wind + solar capacity) / 2048`.
    pub fn for_capacities(wind_capacity: f64, solar_capacity: f64) -> Self {
        Self {
            delta: (wind_capacity + solar_capacity) / DEFAULT_CELLS as f64,
            wind_support: (0.0, wind_capacity),
            solar_support: (0.0, solar_capacity),
        }
    }

    fn grid(&self, support: (f64, f64)) -> Result<GridSpec> {
        GridSpec::covering(support.0, support.1, self.delta)
    }

    fn is_degenerate(&self, qf: &QuantileForecast) -> bool {
        let sorted = rearrange_monotone(&qf.values);
        sorted[sorted.len() - 1] - sorted[0] < 2.0 * self.delta
    }

    /// Total-generation distribution and the route used to build it.
    pub fn total_distribution(
        &self,
        wind: &QuantileForecast,
        solar: &QuantileForecast,
    ) -> Result<(DiscreteDistribution, AggregationRoute)> {
        if self.is_degenerate(solar) || self.is_degenerate(wind) {
            let summed = self.quantile_sum(wind, solar, &wind.levels);
            let support = (
                self.wind_support.0 + self.solar_support.0,
                self.wind_support.1 + self.solar_support.1,
            );
            let grid = self.grid(support)?;
            let dist = match cdf_from_quantiles(&summed, grid, support) {
                Ok(d) => d,
                // A near-degenerate total (both components collapsed) is
                // represented as a point mass at its median.
                Err(Error::GridResolution(_)) => {
                    let mid = summed.value_at(0.5);
                    let point = QuantileForecast::new(summed.levels.clone(), vec![mid; summed.len()])?;
                    cdf_from_quantiles(&point, grid, support)?
                }
                Err(e) => return Err(e),
            };
            return Ok((dist, AggregationRoute::QuantileSum));
        }
        let wind_grid = self.grid(self.wind_support)?;
        let solar_grid = self.grid(self.solar_support)?;
        let fw = cdf_from_quantiles(wind, wind_grid, self.wind_support)?;
        let fs = cdf_from_quantiles(solar, solar_grid, self.solar_support)?;
        Ok((convolve(&fw, &fs)?, AggregationRoute::Convolution))
    }

    /// Quantiles of total generation at `levels`.
    pub fn aggregate(
        &self,
        wind: &QuantileForecast,
        solar: &QuantileForecast,
        levels: &[f64],
    ) -> Result<QuantileForecast> {
        let wind = sorted(wind);
        let solar = sorted(solar);
        if self.is_degenerate(&solar) || self.is_degenerate(&wind) {
            return Ok(self.quantile_sum(&wind, &solar, levels));
        }
        let (dist, _) = self.total_distribution(&wind, &solar)?;
        Ok(QuantileForecast {
            timestamp: wind.timestamp.or(solar.timestamp),
            levels: levels.to_vec(),
            values: quantiles_from_cdf(&dist, levels),
        })
    }

    fn quantile_sum(&self, wind: &QuantileForecast, solar: &QuantileForecast, levels: &[f64]) -> QuantileForecast {
        quantile_by_quantile(wind, solar, levels)
    }
}

fn sorted(qf: &QuantileForecast) -> QuantileForecast {
    QuantileForecast {
        timestamp: qf.timestamp,
        levels: qf.levels.clone(),
        values: rearrange_monotone(&qf.values),
    }
}

/// Total quantiles as per-level sums of the component quantiles.
pub fn quantile_by_quantile(wind: &QuantileForecast, solar: &QuantileForecast, levels: &[f64]) -> QuantileForecast {
    let wind = sorted(wind);
    let solar = sorted(solar);
    QuantileForecast {
        timestamp: wind.timestamp.or(solar.timestamp),
        levels: levels.to_vec(),
        values: levels
            .iter()
            .map(|&q| wind.value_at(q) + solar.value_at(q))
            .collect(),
    }
}

/// Convenience wrapper over [`Aggregator::aggregate`].
pub fn aggregate_quantiles(
    wind: &QuantileForecast,
    solar: &QuantileForecast,
    levels: &[f64],
    aggregator: &Aggregator,
) -> Result<QuantileForecast> {
    aggregator.aggregate(wind, solar, levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(start: f64, delta: f64, size: usize) -> GridSpec {
        GridSpec { start, delta, size }
    }

    fn point_mass(at: f64, delta: f64, size: usize) -> DiscreteDistribution {
        let mut density = vec![0.0; size];
        density[(at / delta).round() as usize] = 1.0 / delta;
        cdf_from_pdf(&DiscreteDistribution {
            grid_start: 0.0,
            delta,
            density,
            cdf: vec![],
        })
    }

    #[test]
    fn rearrangement_sorts() {
        assert_eq!(rearrange_monotone(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(rearrange_monotone(&[3.0, 1.0, 2.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn cdf_hits_knots_and_midpoints() {
        let qf = QuantileForecast::new(vec![0.25, 0.5, 0.75], vec![1.0, 2.0, 3.0]).unwrap();
        let d = cdf_from_quantiles(&qf, grid(0.0, 0.5, 9), (0.0, 4.0)).unwrap();
        assert!((d.cdf[4] - 0.5).abs() < 1e-12);
        assert!((d.cdf[2] - 0.25).abs() < 1e-12);

        let qf = QuantileForecast::new(vec![0.25, 0.75], vec![1.0, 3.0]).unwrap();
        let d = cdf_from_quantiles(&qf, grid(0.0, 0.25, 17), (0.0, 4.0)).unwrap();
        assert!((d.cdf_at(2.0) - 0.5).abs() < 1e-12);
        assert!((d.cdf[0]).abs() < 1e-12);
        assert_eq!(d.cdf[16], 1.0);
    }

    #[test]
    fn degenerate_forecast_is_point_mass() {
        let levels = crate::forecast::dense_levels();
        let qf = QuantileForecast::new(levels.clone(), vec![5.0; levels.len()]).unwrap();
        let d = cdf_from_quantiles(&qf, grid(0.0, 1.0, 11), (0.0, 10.0)).unwrap();
        let jump = d.cdf[5] - d.cdf[4];
        assert!(jump > 0.99, "jump {jump}");
        d.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn narrow_but_nonzero_spread_is_rejected() {
        let qf = QuantileForecast::new(vec![0.1, 0.9], vec![5.0, 5.5]).unwrap();
        let err = cdf_from_quantiles(&qf, grid(0.0, 1.0, 11), (0.0, 10.0)).unwrap_err();
        assert!(matches!(err, Error::GridResolution(_)));
    }

    #[test]
    fn uniform_ramp_density() {
        let cdf: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let d = pdf_from_cdf(&DiscreteDistribution {
            grid_start: 0.0,
            delta: 1.0,
            density: vec![],
            cdf,
        });
        assert_eq!(d.density[0], 0.0);
        for k in 1..=10 {
            assert!((d.density[k] - 0.1).abs() < 1e-12);
        }
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_density_is_clipped_and_renormalised() {
        let d = pdf_from_cdf(&DiscreteDistribution {
            grid_start: 0.0,
            delta: 1.0,
            density: vec![],
            cdf: vec![0.0, 0.6, 0.5, 1.0],
        });
        assert!(d.density.iter().all(|&x| x >= 0.0));
        d.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn point_masses_convolve_to_point_mass() {
        let a = point_mass(3.0, 1.0, 10);
        let b = point_mass(4.0, 1.0, 10);
        let c = convolve(&a, &b).unwrap();
        assert_eq!(c.len(), 19);
        let peak = c
            .density
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap()
            .0;
        assert_eq!(c.grid_value(peak), 7.0);
        assert!((c.density[peak] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_mismatch_is_an_error() {
        let a = point_mass(3.0, 1.0, 10);
        let b = point_mass(4.0, 0.5, 20);
        assert!(convolve(&a, &b).is_err());
    }

    #[test]
    fn uniform_quantile_inverse() {
        let cdf: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let d = pdf_from_cdf(&DiscreteDistribution {
            grid_start: 0.0,
            delta: 0.1,
            density: vec![],
            cdf,
        });
        let q = quantiles_from_cdf(&d, &[0.3, 0.5, 0.9]);
        assert!((q[0] - 3.0).abs() <= 0.1);
        assert!((q[1] - 5.0).abs() <= 0.1);
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn nighttime_aggregate_equals_wind() {
        let levels = crate::forecast::dense_levels();
        let wind = QuantileForecast::new(levels.clone(), levels.iter().map(|t| 100.0 + 300.0 * t).collect()).unwrap();
        let solar = QuantileForecast::new(levels.clone(), vec![0.0; levels.len()]).unwrap();
        let agg = Aggregator::for_capacities(1000.0, 500.0);
        let target = crate::forecast::target_levels();
        let out = agg.aggregate(&wind, &solar, &target).unwrap();
        for (q, v) in target.iter().zip(&out.values) {
            assert_eq!(*v, wind.value_at(*q));
        }
    }
}
