//! Registered synthetic scenarios and their generator.
//!
//! One latent weather state drives the truth. Two forecast "sources" see it
//! through different noise levels and biases, like two NWP providers.
//! Generation, and therefore every downstream number, is a pure function of
//! the scenario and its seed.

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataprep::{
    temporal_shift_columns, Dataset, FeatureRow, Kind, Source, CLOUD_COVER, SOLAR_RADIATION, WIND_SPEED,
};
use crate::error::{Error, Result};
use crate::forecast::QuantileForecast;
use crate::trading::{MarketRecord, MarketSeries, PERIODS_PER_DAY};

/// Solar capacity growth observed mid-stream, 2609 MWp to 2741 MWp.
pub const CAPACITY_GROWTH: f64 = 2741.0 / 2609.0;

pub const SCENARIOS: [&str; 6] = [
    "gaussian",
    "heteroscedastic",
    "capacity-shift",
    "seasonal-spread",
    "asymmetric",
    "smoke",
];

/// True conditional distribution of one plant's output in one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Conditional {
    /// `clamp(N(mean, sd²), lo, hi)`: the bounds carry point masses.
    ClippedNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    Degenerate { value: f64 },
}

impl Conditional {
    pub fn quantile(&self, tau: f64) -> f64 {
        match *self {
            Conditional::Degenerate { value } => value,
            Conditional::ClippedNormal { mean, sd, lo, hi } => {
                if sd == 0.0 {
                    return mean.clamp(lo, hi);
                }
                let n = Normal::new(mean, sd).expect("positive sd");
                n.inverse_cdf(tau).clamp(lo, hi)
            }
        }
    }

    pub fn quantiles(&self, levels: &[f64]) -> Vec<f64> {
        levels.iter().map(|&t| self.quantile(t)).collect()
    }

    pub fn forecast(&self, levels: &[f64], ts: DateTime<Utc>) -> QuantileForecast {
        QuantileForecast {
            timestamp: Some(ts),
            levels: levels.to_vec(),
            values: self.quantiles(levels),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Conditional::Degenerate { value } => value,
            Conditional::ClippedNormal { mean, sd, lo, hi } => {
                let z: f64 = rng.sample(StandardNormal);
                (mean + sd * z).clamp(lo, hi)
            }
        }
    }

    pub fn mean_unclipped(&self) -> f64 {
        match *self {
            Conditional::Degenerate { value } => value,
            Conditional::ClippedNormal { mean, .. } => mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WindNoise {
    /// Constant standard deviation, as a fraction of capacity.
    Gaussian { sd_frac: f64 },
    /// `sd = cap·(base + slope·p(1−p))` with `p` the expected load factor,
    /// so the noise peaks on the steep part of the power curve.
    Heteroscedastic { base_frac: f64, slope_frac: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceNoise {
    /// Standard deviation of the wind-speed forecast error (m/s).
    pub wind_sd: f64,
    pub wind_bias: f64,
    /// Standard deviation of the cloud-cover forecast error (fraction).
    pub cloud_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub days: usize,
    pub start: DateTime<Utc>,
    /// Per half-hour, in MWh.
    pub wind_capacity: f64,
    pub wind_noise: WindNoise,
    pub solar_capacity: f64,
    /// Solar noise sd as a fraction of capacity times the sun elevation.
    pub solar_noise_frac: f64,
    /// `(factor, first day)` of a solar capacity step.
    pub capacity_growth: Option<(f64, usize)>,
    pub sources: [SourceNoise; 2],
    /// Amplitude of a period-of-day bias in both wind-speed forecasts (m/s).
    pub nwp_diurnal_bias: f64,
    pub spread_offset: f64,
    pub spread_amplitude: f64,
    pub spread_noise: f64,
    /// Right-skewed (shifted exponential) instead of Gaussian spread noise.
    pub spread_skewed: bool,
    pub price_level: f64,
}

impl Scenario {
    fn base(name: &str, seed: u64, days: usize) -> Self {
        Self {
            name: name.to_string(),
            seed,
            days,
            start: Utc.with_ymd_and_hms(2024, 4, 1, 0, 0, 0).unwrap(),
            wind_capacity: 600.0,
            wind_noise: WindNoise::Gaussian { sd_frac: 0.05 },
            solar_capacity: 1304.5,
            solar_noise_frac: 0.04,
            capacity_growth: None,
            sources: [
                SourceNoise {
                    wind_sd: 0.5,
                    wind_bias: 0.0,
                    cloud_sd: 0.08,
                },
                SourceNoise {
                    wind_sd: 0.9,
                    wind_bias: 0.3,
                    cloud_sd: 0.15,
                },
            ],
            nwp_diurnal_bias: 0.0,
            spread_offset: 1.0,
            spread_amplitude: 3.0,
            spread_noise: 10.0,
            spread_skewed: false,
            price_level: 60.0,
        }
    }

    /// Look up a registered scenario.
    pub fn named(name: &str, seed: u64) -> Result<Self> {
        let s = match name {
            "gaussian" => Self::base(name, seed, 30),
            "heteroscedastic" => Self {
                wind_noise: WindNoise::Heteroscedastic {
                    base_frac: 0.01,
                    slope_frac: 0.45,
                },
                solar_noise_frac: 0.08,
                ..Self::base(name, seed, 60)
            },
            "capacity-shift" => Self {
                capacity_growth: Some((CAPACITY_GROWTH, 60)),
                solar_noise_frac: 0.03,
                ..Self::base(name, seed, 100)
            },
            "seasonal-spread" => Self {
                spread_amplitude: 8.0,
                spread_noise: 12.0,
                ..Self::base(name, seed, 74)
            },
            "asymmetric" => Self {
                nwp_diurnal_bias: 1.5,
                spread_amplitude: 4.0,
                spread_skewed: true,
                ..Self::base(name, seed, 120)
            },
            "smoke" => Self::base(name, seed, 30),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown scenario `{name}` (known: {})",
                    SCENARIOS.join(", ")
                )))
            }
        };
        Ok(s)
    }

    pub fn with_days(mut self, days: usize) -> Self {
        self.days = days;
        self
    }

    pub fn solar_capacity_on(&self, day: usize) -> f64 {
        match self.capacity_growth {
            Some((factor, from)) if day >= from => self.solar_capacity * factor,
            _ => self.solar_capacity,
        }
    }

    /// Capacity after any growth step.
    pub fn final_solar_capacity(&self) -> f64 {
        self.solar_capacity_on(usize::MAX)
    }

    pub fn total_capacity(&self) -> f64 {
        self.wind_capacity + self.final_solar_capacity()
    }

    /// Expected spread for period `t` (1..=48).
    pub fn spread_mean(&self, period: usize) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * (period as f64 - 1.0) / PERIODS_PER_DAY as f64;
        self.spread_offset + self.spread_amplitude * phase.sin()
    }

    fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::InvalidParameter("scenario needs at least one day".into()));
        }
        if !(self.wind_capacity > 0.0 && self.solar_capacity > 0.0) {
            return Err(Error::InvalidParameter("capacities must be positive".into()));
        }
        Ok(())
    }
}

/// Load factor of the wind farm at a hub-height speed.
pub fn power_curve(speed: f64) -> f64 {
    1.0 / (1.0 + (-(speed - 9.0) / 1.4).exp())
}

/// Sun elevation proxy in [0, 1]; exactly zero outside 05:00–19:00 UTC.
pub fn sun_elevation(ts: DateTime<Utc>) -> f64 {
    let h = ts.hour() as f64 + ts.minute() as f64 / 60.0;
    if !(5.0..=19.0).contains(&h) {
        return 0.0;
    }
    (std::f64::consts::PI * (h - 5.0) / 14.0).sin().max(0.0)
}

fn cloud_fraction(latent: f64) -> f64 {
    1.0 / (1.0 + (-(1.5 * latent - 0.3)).exp())
}

/// Ground truth for one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub timestamp: DateTime<Utc>,
    pub wind: Conditional,
    pub solar: Conditional,
    pub solar_capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub scenario: Scenario,
    /// Indexed by source: DWD then GFS.
    pub wind: [Dataset; 2],
    pub solar: [Dataset; 2],
    pub market: MarketSeries,
    pub truth: Vec<TruthRow>,
}

impl SyntheticData {
    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        self.truth.iter().map(|t| t.timestamp).collect()
    }

    pub fn wind_actuals(&self) -> Vec<f64> {
        self.wind[0].rows.iter().map(|r| r.target.unwrap_or(0.0)).collect()
    }

    pub fn solar_actuals(&self) -> Vec<f64> {
        self.solar[0].rows.iter().map(|r| r.target.unwrap_or(0.0)).collect()
    }
}

const SOURCES: [Source; 2] = [Source::Dwd, Source::Gfs];

fn stat_columns(variable: &str) -> Vec<String> {
    ["max", "mean", "min"].iter().map(|s| format!("{variable}_{s}")).collect()
}

/// Generate a scenario. Every output series covers exactly
/// `days × 48` half-hours starting at `scenario.start`.
pub fn generate(scenario: &Scenario) -> Result<SyntheticData> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let n = scenario.days * PERIODS_PER_DAY;
    // One padding step on each side feeds the lag and lead columns.
    let first = scenario.start - Duration::minutes(30);

    let mut wind_rows: [Vec<FeatureRow>; 2] = [Vec::new(), Vec::new()];
    let mut solar_rows: [Vec<FeatureRow>; 2] = [Vec::new(), Vec::new()];
    let mut truth = Vec::with_capacity(n);
    let mut market = Vec::with_capacity(n);

    let phi_w: f64 = 0.98;
    let phi_c: f64 = 0.97;
    let mut u: f64 = rng.sample(StandardNormal);
    let mut c: f64 = rng.sample(StandardNormal);
    let mut price_day = scenario.price_level;

    for step in 0..n + 2 {
        let ts = first + Duration::minutes(30 * step as i64);
        let e_u: f64 = rng.sample(StandardNormal);
        let e_c: f64 = rng.sample(StandardNormal);
        u = phi_w * u + (1.0 - phi_w * phi_w).sqrt() * e_u;
        c = phi_c * c + (1.0 - phi_c * phi_c).sqrt() * e_c;
        let speed = (8.0 + 3.5 * u).max(0.0);
        let cloud = cloud_fraction(c);
        let sun = sun_elevation(ts);
        let period = crate::dataprep::period_of_day(ts) as usize + 1;
        let day = ((ts - scenario.start).num_minutes().max(0) / (24 * 60)) as usize;
        let solar_cap = scenario.solar_capacity_on(day);

        let p = power_curve(speed);
        let wind_sd = match scenario.wind_noise {
            WindNoise::Gaussian { sd_frac } => sd_frac * scenario.wind_capacity,
            WindNoise::Heteroscedastic { base_frac, slope_frac } => {
                scenario.wind_capacity * (base_frac + slope_frac * p * (1.0 - p))
            }
        };
        let wind_truth = Conditional::ClippedNormal {
            mean: scenario.wind_capacity * p,
            sd: wind_sd,
            lo: 0.0,
            hi: scenario.wind_capacity,
        };
        let solar_truth = if sun == 0.0 {
            Conditional::Degenerate { value: 0.0 }
        } else {
            Conditional::ClippedNormal {
                mean: solar_cap * 0.85 * sun * (1.0 - 0.7 * cloud),
                sd: solar_cap * scenario.solar_noise_frac * sun,
                lo: 0.0,
                hi: solar_cap,
            }
        };
        let y_w = wind_truth.sample(&mut rng);
        let y_s = solar_truth.sample(&mut rng);

        let diurnal = scenario.nwp_diurnal_bias
            * (2.0 * std::f64::consts::PI * (period as f64 - 1.0) / PERIODS_PER_DAY as f64).cos();
        for (k, src) in scenario.sources.iter().enumerate() {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            let e3: f64 = rng.sample(StandardNormal);
            let e4: f64 = rng.sample(StandardNormal);
            let v = (speed + src.wind_bias + diurnal + src.wind_sd * e1).max(0.0);
            let spread = 1.2 + 0.2 * e2.abs();
            wind_rows[k].push(FeatureRow {
                timestamp: ts,
                reference_time: None,
                features: vec![v + spread, v, (v - spread).max(0.0)],
                target: Some(y_w),
            });
            let cf = (cloud + src.cloud_sd * e3).clamp(0.0, 1.0);
            let rad = 1000.0 * sun * (1.0 - 0.7 * cf);
            let jitter = 1.0 + 0.02 * e4;
            let cover = 100.0 * cf;
            solar_rows[k].push(FeatureRow {
                timestamp: ts,
                reference_time: None,
                features: vec![
                    rad * 1.1 * jitter,
                    rad,
                    rad * 0.9,
                    (cover + 10.0).min(100.0),
                    cover,
                    (cover - 10.0).max(0.0),
                    (period - 1) as f64,
                ],
                target: Some(y_s),
            });
        }

        if period == 1 {
            let d: f64 = rng.sample(StandardNormal);
            price_day = scenario.price_level + 8.0 * d;
        }
        let noise = if scenario.spread_skewed {
            let e: f64 = rng.sample(Exp1);
            scenario.spread_noise * (e - 1.0)
        } else {
            let z: f64 = rng.sample(StandardNormal);
            scenario.spread_noise * z
        };
        let z_ss: f64 = rng.sample(StandardNormal);
        let ss = price_day + 5.0 * z_ss;
        let spread = scenario.spread_mean(period) + noise;

        if step >= 1 && step <= n {
            truth.push(TruthRow {
                timestamp: ts,
                wind: wind_truth,
                solar: solar_truth,
                solar_capacity: solar_cap,
            });
            market.push(MarketRecord {
                timestamp: ts,
                da_price: ss + spread,
                ss_price: ss,
                actual: y_w + y_s,
            });
        }
    }

    let wind_cols = stat_columns(WIND_SPEED);
    let mut solar_cols = stat_columns(SOLAR_RADIATION);
    solar_cols.extend(stat_columns(CLOUD_COVER));
    solar_cols.push("period_of_day".into());

    let build = |cols: &[String], rows: Vec<FeatureRow>, kind: Kind, source: Source, shift: &[usize]| {
        let base = Dataset::new(cols.to_vec(), rows, kind, source)?;
        Ok::<_, Error>(temporal_shift_columns(&base, shift, &[-1, 0, 1]))
    };
    let [w0, w1] = wind_rows;
    let [s0, s1] = solar_rows;
    let wind = [
        build(&wind_cols, w0, Kind::Wind, SOURCES[0], &[0, 1, 2])?,
        build(&wind_cols, w1, Kind::Wind, SOURCES[1], &[0, 1, 2])?,
    ];
    let solar = [
        build(&solar_cols, s0, Kind::Solar, SOURCES[0], &[0, 1, 2])?,
        build(&solar_cols, s1, Kind::Solar, SOURCES[1], &[0, 1, 2])?,
    ];
    Ok(SyntheticData {
        scenario: scenario.clone(),
        wind,
        solar,
        market: MarketSeries::new(market)?,
        truth,
    })
}
