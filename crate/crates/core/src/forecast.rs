//! Quantile level sets and the per-timestamp quantile forecast type shared by
//! every stage of the pipeline.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 101-level dense set `{0.001} ∪ {0.01, …, 0.99} ∪ {0.999}` used to
/// reconstruct component CDFs.
pub fn dense_levels() -> Vec<f64> {
    let mut levels = Vec::with_capacity(101);
    levels.push(0.001);
    levels.extend((1..=99).map(|i| i as f64 / 100.0));
    levels.push(0.999);
    levels
}

/// The reduced 21-level set `{0.001, 0.05, …, 0.95, 0.999}` used for fast
/// runs and the test suite.
pub fn desk_levels() -> Vec<f64> {
    let mut levels = Vec::with_capacity(21);
    levels.push(0.001);
    levels.extend((1..=19).map(|i| i as f64 / 20.0));
    levels.push(0.999);
    levels
}

/// The scored level set `{0.1, 0.2, …, 0.9}`.
pub fn target_levels() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Parse a level-set description.
///
/// Accepts the names `dense`, `desk` and `target`, a range `lo..hi` (step
/// 0.1) or `lo..hi:step`, or a comma separated list.
pub fn parse_levels(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    let levels = match spec {
        "dense" => dense_levels(),
        "desk" => desk_levels(),
        "target" => target_levels(),
        _ if spec.contains("..") => {
            let (range, step) = match spec.split_once(':') {
                Some((r, s)) => (r, parse_level_value(s)?),
                None => (spec, 0.1),
            };
            let (lo, hi) = range
                .split_once("..")
                .ok_or_else(|| Error::parse("levels", spec))?;
            let lo = parse_level_value(lo)?;
            let hi = parse_level_value(hi)?;
            if step <= 0.0 || hi < lo {
                return Err(Error::parse("levels", format!("bad range `{spec}`")));
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=count)
                .map(|i| round_level(lo + i as f64 * step))
                .collect()
        }
        _ => spec
            .split(',')
            .map(parse_level_value)
            .collect::<Result<Vec<_>>>()?,
    };
    validate_levels(&levels)?;
    Ok(levels)
}

fn parse_level_value(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::parse("levels", format!("`{s}`: {e}")))
}

// Snap accumulated step arithmetic back onto a 1e-9 lattice so that
// `0.1..0.9` yields exactly 0.3 rather than 0.30000000000000004.
fn round_level(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Levels must lie in (0, 1) and be strictly increasing.
pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::EmptyInput("level set"));
    }
    if levels.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "quantile levels must lie in (0, 1): {levels:?}"
        )));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "quantile levels must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Column header used for a level in quantile CSV files (`q0.1`, `q0.999`).
pub fn level_header(level: f64) -> String {
    format!("q{level}")
}

/// Predicted values over an ordered level set for one timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub timestamp: Option<DateTime<Utc>>,
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileForecast {
    pub fn new(levels: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if levels.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "levels vs values",
                left: levels.len(),
                right: values.len(),
            });
        }
        validate_levels(&levels)?;
        Ok(Self {
            timestamp: None,
            levels,
            values,
        })
    }

    pub fn with_timestamp(mut self, ts: DateTime<Utc>) -> Self {
        self.timestamp = Some(ts);
        self
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    /// Spread between the outermost quantiles.
    pub fn spread(&self) -> f64 {
        match (self.values.first(), self.values.last()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }

    /// Value at an arbitrary level by linear interpolation of the quantile
    /// function, flat beyond the outermost knots.
    pub fn value_at(&self, level: f64) -> f64 {
        let n = self.levels.len();
        if level <= self.levels[0] {
            return self.values[0];
        }
        if level >= self.levels[n - 1] {
            return self.values[n - 1];
        }
        let hi = self.levels.partition_point(|&t| t < level);
        if self.levels[hi] == level {
            return self.values[hi];
        }
        let lo = hi - 1;
        let w = (level - self.levels[lo]) / (self.levels[hi] - self.levels[lo]);
        self.values[lo] + w * (self.values[hi] - self.values[lo])
    }

    /// Values at a different level set (exact where the levels coincide).
    pub fn resample(&self, levels: &[f64]) -> QuantileForecast {
        QuantileForecast {
            timestamp: self.timestamp,
            levels: levels.to_vec(),
            values: levels.iter().map(|&t| self.value_at(t)).collect(),
        }
    }

    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> QuantileForecast {
        QuantileForecast {
            timestamp: self.timestamp,
            levels: self.levels.clone(),
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| f(i, v))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sets_have_expected_shape() {
        let b = dense_levels();
        assert_eq!(b.len(), 101);
        assert_eq!(b[0], 0.001);
        assert_eq!(b[1], 0.01);
        assert_eq!(b[99], 0.99);
        assert_eq!(b[100], 0.999);
        validate_levels(&b).unwrap();

        let d = desk_levels();
        assert_eq!(d.len(), 21);
        assert_eq!(d[1], 0.05);
        assert_eq!(d[10], 0.5);
        validate_levels(&d).unwrap();

        assert_eq!(target_levels().len(), 9);
    }

    #[test]
    fn parses_ranges_and_lists() {
        assert_eq!(parse_levels("0.1..0.9").unwrap(), target_levels());
        assert_eq!(parse_levels("0.25,0.5").unwrap(), vec![0.25, 0.5]);
        assert_eq!(parse_levels("0.05..0.95:0.05").unwrap().len(), 19);
        assert!(parse_levels("0.5,0.4").is_err());
        assert!(parse_levels("0..1").is_err());
    }

    #[test]
    fn headers_use_shortest_decimal() {
        assert_eq!(level_header(0.1), "q0.1");
        assert_eq!(level_header(0.001), "q0.001");
        assert_eq!(level_header(0.999), "q0.999");
    }

    #[test]
    fn interpolates_between_levels() {
        let qf = QuantileForecast::new(vec![0.25, 0.75], vec![1.0, 3.0]).unwrap();
        assert_eq!(qf.value_at(0.5), 2.0);
        assert_eq!(qf.value_at(0.1), 1.0);
        assert_eq!(qf.value_at(0.9), 3.0);
    }
}
