//! Random hyperparameter search scored by chronological cross-validation.

use chrono::{Datelike, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataprep::{Dataset, DEFAULT_FLT};
use crate::error::{Error, Result};
use crate::gbqr::{fit, Loss, TrainConfig};
use crate::metrics::pinball;

/// Search ranges. Integer ranges are `(lo, hi, step)` and inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: (f64, f64),
    pub max_depth: (usize, usize, usize),
    pub num_leaves: (usize, usize, usize),
    pub min_data_in_leaf: (usize, usize, usize),
    pub num_estimators: Vec<usize>,
    pub lambda_l1: (usize, usize, usize),
    pub lambda_l2: (usize, usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: (0.01, 0.3),
            max_depth: (3, 12, 1),
            num_leaves: (100, 1000, 100),
            min_data_in_leaf: (200, 10000, 100),
            num_estimators: vec![500, 1000, 2000],
            lambda_l1: (0, 100, 10),
            lambda_l2: (0, 100, 10),
        }
    }
}

fn stepped<R: Rng>(rng: &mut R, (lo, hi, step): (usize, usize, usize)) -> usize {
    let steps = (hi - lo) / step.max(1);
    lo + step.max(1) * rng.random_range(0..=steps)
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.max_depth, self.num_leaves, self.min_data_in_leaf, self.lambda_l1, self.lambda_l2];
        if ranges.iter().any(|r| r.0 > r.1)
            || !(self.learning_rate.0 > 0.0 && self.learning_rate.0 <= self.learning_rate.1)
            || self.num_estimators.is_empty()
        {
            return Err(Error::InvalidParameter("malformed search space".into()));
        }
        Ok(())
    }

    /// Draw one configuration; fields outside the space come from `base`.
    pub fn sample<R: Rng>(&self, rng: &mut R, base: &TrainConfig) -> TrainConfig {
        let (lo, hi) = self.learning_rate;
        TrainConfig {
            learning_rate: if hi > lo { rng.random_range(lo..=hi) } else { lo },
            max_depth: stepped(rng, self.max_depth),
            num_leaves: stepped(rng, self.num_leaves),
            min_data_in_leaf: stepped(rng, self.min_data_in_leaf),
            num_estimators: self.num_estimators[rng.random_range(0..self.num_estimators.len())],
            lambda_l1: stepped(rng, self.lambda_l1) as f64,
            lambda_l2: stepped(rng, self.lambda_l2) as f64,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvFold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Whether a row looks like an operational day-ahead forecast: issued at
/// 00:00 with a lead time inside the default window. Rows without a
/// reference time are assumed to qualify.
pub fn is_operational(row: &crate::dataprep::FeatureRow) -> bool {
    match row.reference_time {
        None => true,
        Some(r) => {
            let lead = (row.timestamp - r).num_minutes() as f64 / 60.0;
            r.hour() == 0 && r.minute() == 0 && (DEFAULT_FLT.0..=DEFAULT_FLT.1).contains(&lead)
        }
    }
}

/// `k` contiguous chronological blocks split on day boundaries. Each block
/// is a test set (operational rows only) for a model trained on the others.
pub fn cv_folds(ds: &Dataset, k: usize) -> Result<Vec<CvFold>> {
    if k < 2 {
        return Err(Error::InvalidParameter("need at least two folds".into()));
    }
    let days: Vec<_> = ds.rows.iter().map(|r| r.timestamp.date_naive().num_days_from_ce()).collect();
    let mut distinct = days.clone();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::InsufficientHistory(format!(
            "{} days cannot form {k} folds",
            distinct.len()
        )));
    }
    let fold_of_day = |d: i32| {
        let pos = distinct.binary_search(&d).expect("day present");
        pos * k / distinct.len()
    };
    let mut folds = vec![
        CvFold {
            train: Vec::new(),
            test: Vec::new(),
        };
        k
    ];
    for (i, &d) in days.iter().enumerate() {
        let f = fold_of_day(d);
        for (j, fold) in folds.iter_mut().enumerate() {
            if j == f {
                if is_operational(&ds.rows[i]) {
                    fold.test.push(i);
                }
            } else {
                fold.train.push(i);
            }
        }
    }
    Ok(folds)
}

/// Mean out-of-fold pinball loss at τ = 0.5.
pub fn cv_score(ds: &Dataset, folds: &[CvFold], cfg: &TrainConfig) -> Result<f64> {
    let x = ds.features();
    let y = ds.targets()?;
    let mut total = 0.0;
    let mut count = 0usize;
    for fold in folds {
        let tx: Vec<Vec<f64>> = fold.train.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = fold.train.iter().map(|&i| y[i]).collect();
        let model = fit(&tx, &ty, &ds.columns, Loss::pinball(0.5), cfg)?;
        for &i in &fold.test {
            total += pinball(y[i], model.predict_row(&x[i]), 0.5);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyInput("cross-validation test rows"));
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: TrainConfig,
    pub best_score: f64,
    /// Every sampled configuration with its score, in sampling order.
    pub trials: Vec<(TrainConfig, f64)>,
}

/// Sample `budget` configurations and keep the one with the lowest
/// cross-validated median pinball loss (the first one on ties).
pub fn random_search(
    ds: &Dataset,
    space: &SearchSpace,
    budget: usize,
    folds: usize,
    base: &TrainConfig,
    seed: u64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::InvalidParameter("search budget must be at least 1".into()));
    }
    space.validate()?;
    let cv = cv_folds(ds, folds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(budget);
    for _ in 0..budget {
        let cfg = space.sample(&mut rng, base);
        let score = cv_score(ds, &cv, &cfg)?;
        log::info!("search trial {}: score {score:.4}", trials.len() + 1);
        trials.push((cfg, score));
    }
    let (best, best_score) = trials
        .iter()
        .fold(None::<&(TrainConfig, f64)>, |acc, t| match acc {
            Some(a) if a.1 <= t.1 => Some(a),
            _ => Some(t),
        })
        .cloned()
        .expect("budget ≥ 1");
    Ok(SearchResult {
        best,
        best_score,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_respect_table_steps() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let c = space.sample(&mut rng, &TrainConfig::default());
            assert!((0.01..=0.3).contains(&c.learning_rate));
            assert!((3..=12).contains(&c.max_depth));
            assert_eq!(c.num_leaves % 100, 0);
            assert!((100..=1000).contains(&c.num_leaves));
            assert_eq!(c.min_data_in_leaf % 100, 0);
            assert!([500, 1000, 2000].contains(&c.num_estimators));
            assert_eq!(c.lambda_l1 % 10.0, 0.0);
            assert!(c.lambda_l2 <= 100.0);
        }
    }
}
