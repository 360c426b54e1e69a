//! Conditional-independence check between wind and solar.
//!
//! Each target is modelled as `y = f(x) + ε`. If the two noise terms are
//! independent, the targets are conditionally independent given their
//! features and convolving their distributions is justified. Residuals come
//! from held-out folds, their mutual information is estimated on an
//! equal-frequency histogram, and a permutation test calibrates it.

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataprep::Dataset;
use crate::error::{Error, Result};
use crate::gbqr::{fit, Loss, TrainConfig};

pub const MIN_MI_SAMPLES: usize = 500;
pub const DEFAULT_BINS: usize = 30;
pub const SIGNIFICANCE: f64 = 0.05;
const FOLDS: usize = 3;

/// Aligned additive-noise residuals of the wind and solar models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPair {
    pub timestamps: Vec<DateTime<Utc>>,
    pub eps_w: Vec<f64>,
    pub eps_s: Vec<f64>,
}

impl ResidualPair {
    pub fn new(timestamps: Vec<DateTime<Utc>>, eps_w: Vec<f64>, eps_s: Vec<f64>) -> Result<Self> {
        if eps_w.len() != eps_s.len() {
            return Err(Error::LengthMismatch {
                what: "wind vs solar residuals",
                left: eps_w.len(),
                right: eps_s.len(),
            });
        }
        if timestamps.len() != eps_w.len() {
            return Err(Error::LengthMismatch {
                what: "timestamps vs residuals",
                left: timestamps.len(),
                right: eps_w.len(),
            });
        }
        if eps_w.iter().chain(&eps_s).any(|v| !v.is_finite()) {
            return Err(Error::UncleanDataset("non-finite residual".into()));
        }
        Ok(Self { timestamps, eps_w, eps_s })
    }

    pub fn len(&self) -> usize {
        self.eps_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps_w.is_empty()
    }

    /// Pearson correlation of the two residual series.
    pub fn correlation(&self) -> f64 {
        let n = self.len() as f64;
        let mw = self.eps_w.iter().sum::<f64>() / n;
        let ms = self.eps_s.iter().sum::<f64>() / n;
        let (mut sww, mut sss, mut sws) = (0.0, 0.0, 0.0);
        for (w, s) in self.eps_w.iter().zip(&self.eps_s) {
            sww += (w - mw) * (w - mw);
            sss += (s - ms) * (s - ms);
            sws += (w - mw) * (s - ms);
        }
        if sww == 0.0 || sss == 0.0 {
            0.0
        } else {
            sws / (sww * sss).sqrt()
        }
    }
}

/// Residuals of a squared-error boosted model, each row predicted by the
/// model trained on the other chronological folds.
pub fn held_out_residuals(x: &[Vec<f64>], y: &[f64], names: &[String], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let n = y.len();
    if n < FOLDS {
        return Err(Error::InsufficientHistory(format!("{n} rows cannot form {FOLDS} folds")));
    }
    let bounds: Vec<usize> = (0..=FOLDS).map(|k| k * n / FOLDS).collect();
    let mut out = vec![0.0; n];
    for k in 0..FOLDS {
        let (lo, hi) = (bounds[k], bounds[k + 1]);
        let train_x: Vec<Vec<f64>> = x[..lo].iter().chain(&x[hi..]).cloned().collect();
        let train_y: Vec<f64> = y[..lo].iter().chain(&y[hi..]).copied().collect();
        let model = fit(&train_x, &train_y, names, Loss::SquaredError, cfg)?;
        for i in lo..hi {
            out[i] = y[i] - model.predict_row(&x[i]);
        }
    }
    Ok(out)
}

/// Fit both additive-noise models and return their held-out residuals.
/// The datasets must cover exactly the same timestamps.
pub fn fit_anm_residuals(wind: &Dataset, solar: &Dataset, cfg: &TrainConfig) -> Result<ResidualPair> {
    let ts = wind.timestamps();
    if ts != solar.timestamps() {
        return Err(Error::UncleanDataset(format!(
            "wind ({} rows) and solar ({} rows) timestamps are not aligned",
            ts.len(),
            solar.len()
        )));
    }
    let eps_w = held_out_residuals(&wind.features(), &wind.targets()?, &wind.columns, cfg)?;
    let eps_s = held_out_residuals(&solar.features(), &solar.targets()?, &solar.columns, cfg)?;
    ResidualPair::new(ts, eps_w, eps_s)
}

/// Equal-frequency bin of every value: rank `r` goes to bin `r·bins/n`.
/// Ties are ordered by position so every bin holds `n/bins` values.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * bins / n;
    }
    out
}

fn mi_from_bins(bw: &[usize], bs: &[usize], bins: usize) -> f64 {
    let n = bw.len() as f64;
    let mut joint = vec![0u32; bins * bins];
    let mut mw = vec![0u32; bins];
    let mut ms = vec![0u32; bins];
    for (&a, &b) in bw.iter().zip(bs) {
        joint[a * bins + b] += 1;
        mw[a] += 1;
        ms[b] += 1;
    }
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c == 0 {
                continue;
            }
            let p = c as f64 / n;
            mi += p * (p * n * n / (mw[a] as f64 * ms[b] as f64)).ln();
        }
    }
    mi.max(0.0)
}

fn check_mi_inputs(pair: &ResidualPair, bins: usize) -> Result<()> {
    if pair.len() < MIN_MI_SAMPLES {
        return Err(Error::InsufficientHistory(format!(
            "mutual information needs at least {MIN_MI_SAMPLES} samples, have {}",
            pair.len()
        )));
    }
    if bins < 2 {
        return Err(Error::InvalidParameter("need at least two bins".into()));
    }
    Ok(())
}

/// Plug-in mutual information (nats) on a `bins × bins` equal-frequency grid.
pub fn mutual_information(pair: &ResidualPair, bins: usize) -> Result<f64> {
    check_mi_inputs(pair, bins)?;
    let bw = equal_frequency_bins(&pair.eps_w, bins);
    let bs = equal_frequency_bins(&pair.eps_s, bins);
    Ok(mi_from_bins(&bw, &bs, bins))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Independent,
    Dependent,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Independent => "independent",
            Verdict::Dependent => "dependent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub samples: usize,
    pub bins: usize,
    pub mutual_information: f64,
    pub permutations: usize,
    /// Mean MI over the shuffled pairs.
    pub permuted_mean: Option<f64>,
    /// `(1 + #{permuted ≥ observed}) / (1 + permutations)`.
    pub p_value: Option<f64>,
    pub verdict: Option<Verdict>,
}

/// Permutation test of the observed MI against shuffles of `eps_s`.
/// Permutation `i` draws from a generator seeded with `seed + i`, so the
/// result does not depend on the thread count.
pub fn independence_report(pair: &ResidualPair, bins: usize, permutations: usize, seed: u64) -> Result<IndependenceReport> {
    check_mi_inputs(pair, bins)?;
    let bw = equal_frequency_bins(&pair.eps_w, bins);
    let bs = equal_frequency_bins(&pair.eps_s, bins);
    let observed = mi_from_bins(&bw, &bs, bins);
    if permutations == 0 {
        return Ok(IndependenceReport {
            samples: pair.len(),
            bins,
            mutual_information: observed,
            permutations,
            permuted_mean: None,
            p_value: None,
            verdict: None,
        });
    }
    let permuted: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut shuffled = bs.clone();
            shuffled.shuffle(&mut rng);
            mi_from_bins(&bw, &shuffled, bins)
        })
        .collect();
    let exceed = permuted.iter().filter(|&&m| m >= observed).count();
    let p = (1 + exceed) as f64 / (1 + permutations) as f64;
    Ok(IndependenceReport {
        samples: pair.len(),
        bins,
        mutual_information: observed,
        permutations,
        permuted_mean: Some(permuted.iter().sum::<f64>() / permutations as f64),
        p_value: Some(p),
        verdict: Some(if p > SIGNIFICANCE {
            Verdict::Independent
        } else {
            Verdict::Dependent
        }),
    })
}
