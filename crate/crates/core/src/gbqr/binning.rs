//! Equal-frequency histogram binning of feature columns.

use serde::{Deserialize, Serialize};

/// Bin boundaries of one feature. A value `x` falls in bin `j` where `j` is
/// the number of thresholds strictly below `x`, so `x ≤ thresholds[j]` is
/// equivalent to `bin(x) ≤ j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub thresholds: Vec<f64>,
}

impl BinMapper {
    /// Boundaries placed where the cumulative count crosses a multiple of
    /// `n / max_bins`. Thresholds sit halfway between the largest value of
    /// one bin and the smallest value of the next.
    pub fn fit(values: &[f64], max_bins: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct: Vec<(f64, usize)> = Vec::new();
        for v in sorted {
            match distinct.last_mut() {
                Some((last, count)) if *last == v => *count += 1,
                _ => distinct.push((v, 1)),
            }
        }
        let n = values.len();
        let mut thresholds = Vec::new();
        if distinct.len() <= max_bins {
            thresholds.extend(distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)));
        } else {
            let mut seen = 0usize;
            for w in distinct.windows(2) {
                let before = seen * max_bins / n;
                seen += w[0].1;
                if seen * max_bins / n > before {
                    thresholds.push(midpoint(w[0].0, w[1].0));
                }
            }
        }
        Self { thresholds }
    }

    pub fn num_bins(&self) -> usize {
        self.thresholds.len() + 1
    }

    #[inline]
    pub fn bin(&self, x: f64) -> u16 {
        self.thresholds.partition_point(|&t| t < x) as u16
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Keep a < m so `a` still goes left when rounding collapses m onto b.
    if m >= b { a } else { m }
}

/// Column-major binned copy of a feature matrix.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    pub mappers: Vec<BinMapper>,
    pub columns: Vec<Vec<u16>>,
    pub n_rows: usize,
}

impl BinnedMatrix {
    pub fn new(rows: &[Vec<f64>], max_bins: usize) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut mappers = Vec::with_capacity(n_cols);
        let mut columns = Vec::with_capacity(n_cols);
        for c in 0..n_cols {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let mapper = BinMapper::fit(&col, max_bins);
            columns.push(col.iter().map(|&x| mapper.bin(x)).collect());
            mappers.push(mapper);
        }
        Self {
            mappers,
            columns,
            n_rows: rows.len(),
        }
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_distinct_values_get_their_own_bins() {
        let m = BinMapper::fit(&[0.0, 1.0, 1.0, 0.0, 2.0], 256);
        assert_eq!(m.thresholds, vec![0.5, 1.5]);
        assert_eq!(m.bin(0.0), 0);
        assert_eq!(m.bin(0.5), 0);
        assert_eq!(m.bin(1.0), 1);
        assert_eq!(m.bin(7.0), 2);
    }

    #[test]
    fn many_values_are_bucketed_evenly() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let m = BinMapper::fit(&values, 10);
        assert_eq!(m.num_bins(), 10);
        let mut counts = vec![0; 10];
        for &v in &values {
            counts[m.bin(v) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 100), "{counts:?}");
    }

    #[test]
    fn constant_column_is_one_bin() {
        let m = BinMapper::fit(&[3.0; 50], 16);
        assert_eq!(m.num_bins(), 1);
    }
}
