//! End-to-end error shaping: a small network predicts the spread from the
//! frozen power forecast and the period of day, trained on the trading loss
//! itself rather than on spread accuracy.
//!
//! The trading loss is asymmetric in the two forecast errors: a power error
//! `e_p` is best compensated by a spread error of `−2k·e_p`. A spread head
//! trained on that loss learns to offset predictable power-forecast bias.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{realized_trading_loss, trading_loss_gradient, PERIODS_PER_DAY, SPREAD_LOSS_WEIGHT};
use crate::error::{Error, Result};

/// One training observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadSample {
    /// Frozen power forecast.
    pub power: f64,
    pub actual: f64,
    pub spread: f64,
    /// Settlement period, 1..=48.
    pub period: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean realised trading loss plus the accuracy hinge penalty.
    Trading,
    /// Mean squared spread error.
    Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorShapingConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the hinge on spread MSE above `eps_pi`.
    pub mu_pi: f64,
    /// Allowed spread MSE; by default 1.5× the accuracy model's validation MSE.
    pub eps_pi: Option<f64>,
    pub seed: u64,
}

impl Default for ErrorShapingConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            epochs: 300,
            batch_size: 256,
            learning_rate: 0.01,
            mu_pi: 10.0,
            eps_pi: None,
            seed: 0,
        }
    }
}

/// One-hidden-layer tanh network on `(power / power_scale, one-hot period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorShapingModel {
    pub w_power: Vec<f64>,
    /// `w_period[t - 1][j]`: weight from period `t` to hidden unit `j`.
    pub w_period: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub power_scale: f64,
    pub spread_scale: f64,
}

struct Forward {
    hidden: Vec<f64>,
    out: f64,
}

impl ErrorShapingModel {
    /// A network that always predicts zero spread.
    pub fn zero(hidden: usize) -> Self {
        Self {
            w_power: vec![0.0; hidden],
            w_period: vec![vec![0.0; hidden]; PERIODS_PER_DAY],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            power_scale: 1.0,
            spread_scale: 1.0,
        }
    }

    fn init(hidden: usize, power_scale: f64, spread_scale: f64, mean_spread: f64, rng: &mut ChaCha8Rng) -> Self {
        let a1 = 1.0 / 2f64.sqrt();
        let a2 = 1.0 / (hidden.max(1) as f64).sqrt();
        let mut uni = |a: f64| rng.random_range(-a..a);
        Self {
            w_power: (0..hidden).map(|_| uni(a1)).collect(),
            w_period: (0..PERIODS_PER_DAY).map(|_| (0..hidden).map(|_| uni(a1)).collect()).collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| uni(a2)).collect(),
            b2: mean_spread / spread_scale,
            power_scale,
            spread_scale,
        }
    }

    fn forward(&self, power: f64, period: usize) -> Forward {
        let x = power / self.power_scale;
        let wp = &self.w_period[period - 1];
        let hidden: Vec<f64> = (0..self.w_power.len())
            .map(|j| (self.w_power[j] * x + wp[j] + self.b1[j]).tanh())
            .collect();
        let out = self.b2 + hidden.iter().zip(&self.w2).map(|(h, w)| h * w).sum::<f64>();
        Forward { hidden, out }
    }

    /// Predicted spread for a power forecast in a given period (1..=48).
    pub fn predict(&self, power: f64, period: usize) -> f64 {
        self.spread_scale * self.forward(power, period).out
    }

    pub fn is_finite(&self) -> bool {
        self.w_power
            .iter()
            .chain(self.w_period.iter().flatten())
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
            .all(|v| v.is_finite())
    }
}

/// Mean realised trading loss of the model's spread predictions.
pub fn mean_trading_loss(model: &ErrorShapingModel, samples: &[SpreadSample]) -> f64 {
    samples
        .iter()
        .map(|s| realized_trading_loss(s.power, s.actual, model.predict(s.power, s.period), s.spread))
        .sum::<f64>()
        / samples.len() as f64
}

pub fn spread_mse(model: &ErrorShapingModel, samples: &[SpreadSample]) -> f64 {
    samples
        .iter()
        .map(|s| (model.predict(s.power, s.period) - s.spread).powi(2))
        .sum::<f64>()
        / samples.len() as f64
}

fn validate(samples: &[SpreadSample], cfg: &ErrorShapingConfig) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("error-shaping samples"));
    }
    if samples.iter().any(|s| !(1..=PERIODS_PER_DAY).contains(&s.period)) {
        return Err(Error::InvalidParameter("sample period outside 1..=48".into()));
    }
    if samples.iter().any(|s| !(s.power.is_finite() && s.actual.is_finite() && s.spread.is_finite())) {
        return Err(Error::UncleanDataset("non-finite error-shaping sample".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter("batch size and learning rate must be positive".into()));
    }
    Ok(())
}

/// Positions of each parameter in the flat gradient vector.
struct Layout {
    hidden: usize,
}

impl Layout {
    fn len(&self) -> usize {
        (3 + PERIODS_PER_DAY) * self.hidden + 1
    }
    fn w_power(&self, j: usize) -> usize {
        j
    }
    fn b1(&self, j: usize) -> usize {
        self.hidden + j
    }
    fn w2(&self, j: usize) -> usize {
        2 * self.hidden + j
    }
    fn b2(&self) -> usize {
        3 * self.hidden
    }
    fn w_period(&self, period: usize, j: usize) -> usize {
        3 * self.hidden + 1 + (period - 1) * self.hidden + j
    }
}

/// Adam moment estimates with the usual bias correction.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        grad.iter()
            .enumerate()
            .map(|(k, &g)| {
                self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * g;
                self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * g * g;
                self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

/// Mini-batch training with Adam steps on either objective.
///
/// Losses are normalised by the spread scale so that one learning rate suits
/// both objectives: the trading loss is divided by `s²/(4k)` and the squared
/// error by `s²`. Gradients through clipped bids are zero.
pub fn train(samples: &[SpreadSample], objective: Objective, eps_pi: f64, cfg: &ErrorShapingConfig) -> Result<ErrorShapingModel> {
    validate(samples, cfg)?;
    let n = samples.len();
    let mean_spread = samples.iter().map(|s| s.spread).sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s.spread - mean_spread).powi(2)).sum::<f64>() / n as f64;
    let spread_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let power_scale = samples.iter().fold(0.0f64, |m, s| m.max(s.power.abs())).max(1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ErrorShapingModel::init(cfg.hidden, power_scale, spread_scale, mean_spread, &mut rng);
    let mut order: Vec<usize> = (0..n).collect();
    let h = cfg.hidden;
    let s = spread_scale;
    let layout = Layout { hidden: h };
    let mut adam = Adam::new(layout.len(), cfg.learning_rate);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len() as f64;
            let passes: Vec<Forward> = batch
                .iter()
                .map(|&i| model.forward(samples[i].power, samples[i].period))
                .collect();
            let hinge_active = objective == Objective::Trading && {
                let mse = batch
                    .iter()
                    .zip(&passes)
                    .map(|(&i, f)| (s * f.out - samples[i].spread).powi(2))
                    .sum::<f64>()
                    / b;
                mse > eps_pi
            };

            let mut grad = vec![0.0; layout.len()];
            for (&i, f) in batch.iter().zip(&passes) {
                let smp = &samples[i];
                let pred = s * f.out;
                let err = pred - smp.spread;
                // d(normalised loss)/d(out), averaged over the batch.
                let mut g = match objective {
                    Objective::Accuracy => 2.0 * err / s,
                    Objective::Trading => {
                        trading_loss_gradient(smp.power, smp.actual, pred, smp.spread) * s
                            / (s * s * SPREAD_LOSS_WEIGHT)
                    }
                };
                if hinge_active {
                    g += cfg.mu_pi * 2.0 * err / s;
                }
                g /= b;
                grad[layout.b2()] += g;
                let x = smp.power / model.power_scale;
                for j in 0..h {
                    grad[layout.w2(j)] += g * f.hidden[j];
                    let delta = g * model.w2[j] * (1.0 - f.hidden[j] * f.hidden[j]);
                    grad[layout.w_power(j)] += delta * x;
                    grad[layout.b1(j)] += delta;
                    grad[layout.w_period(smp.period, j)] += delta;
                }
            }
            let step = adam.step(&grad);
            for j in 0..h {
                model.w_power[j] -= step[layout.w_power(j)];
                model.b1[j] -= step[layout.b1(j)];
                model.w2[j] -= step[layout.w2(j)];
                for t in 1..=PERIODS_PER_DAY {
                    model.w_period[t - 1][j] -= step[layout.w_period(t, j)];
                }
            }
            model.b2 -= step[layout.b2()];
        }
        if !model.is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(model)
}

/// Accuracy-oriented spread model: same network trained on squared error.
pub fn train_accuracy_model(samples: &[SpreadSample], cfg: &ErrorShapingConfig) -> Result<ErrorShapingModel> {
    train(samples, Objective::Accuracy, f64::INFINITY, cfg)
}

/// Train the error-shaping head. When `eps_pi` is not configured it is set
/// to 1.5× the validation MSE of an accuracy model fitted on the first 80%
/// of the samples and scored on the rest.
pub fn train_error_shaping(samples: &[SpreadSample], cfg: &ErrorShapingConfig) -> Result<ErrorShapingModel> {
    validate(samples, cfg)?;
    let eps = match cfg.eps_pi {
        Some(e) => e,
        None => {
            let cut = (samples.len() * 4 / 5).max(1);
            let (fit, val) = samples.split_at(cut);
            let val = if val.is_empty() { fit } else { val };
            let acc = train_accuracy_model(fit, cfg)?;
            1.5 * spread_mse(&acc, val)
        }
    };
    train(samples, Objective::Trading, eps, cfg)
}
