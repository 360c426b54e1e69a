//! Turning raw NWP grids and metered generation into aligned half-hourly
//! feature tables.
//!
//! The flow is: group long-format weather records into per-field grids,
//! keep forecasts inside the lead-time window, reduce each grid to spatial
//! statistics, resample the hourly statistic series to half-hours, attach
//! time-shifted copies, and join with cleaned targets.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HALF_HOUR: i64 = 30 * 60;

/// Default forecast lead-time window, in hours.
pub const DEFAULT_FLT: (f64, f64) = (23.0, 47.0);

pub const WIND_SPEED: &str = "wind_speed_100m";
pub const SOLAR_RADIATION: &str = "solar_down_rad";
pub const CLOUD_COVER: &str = "cloud_cover";

/// One value of a gridded forecast field at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub reference_time: DateTime<Utc>,
    pub valid_time: DateTime<Utc>,
    pub variable: String,
    pub point: u32,
    pub value: f64,
}

/// All grid-point values of one variable for one (reference, valid) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawWeatherGrid {
    pub reference_time: DateTime<Utc>,
    pub valid_time: DateTime<Utc>,
    pub variable: String,
    pub values: Vec<f64>,
}

impl RawWeatherGrid {
    pub fn lead_time_hours(&self) -> f64 {
        (self.valid_time - self.reference_time).num_seconds() as f64 / 3600.0
    }
}

/// Group long-format records into grids, ordered by valid time, variable and
/// reference time. NaN values are dropped; grids left empty disappear.
pub fn group_grids(records: &[WeatherRecord]) -> Vec<RawWeatherGrid> {
    let mut groups: BTreeMap<(DateTime<Utc>, String, DateTime<Utc>), Vec<(u32, f64)>> = BTreeMap::new();
    for r in records {
        if r.value.is_nan() {
            continue;
        }
        groups
            .entry((r.valid_time, r.variable.clone(), r.reference_time))
            .or_default()
            .push((r.point, r.value));
    }
    groups
        .into_iter()
        .map(|((valid_time, variable, reference_time), mut pts)| {
            pts.sort_by_key(|p| p.0);
            RawWeatherGrid {
                reference_time,
                valid_time,
                variable,
                values: pts.into_iter().map(|p| p.1).collect(),
            }
        })
        .collect()
}

/// Spatial summary statistics of one grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialSummary {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub p25: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    Mean,
    Max,
    Min,
    P25,
    P75,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Max => "max",
            Statistic::Min => "min",
            Statistic::P25 => "p25",
            Statistic::P75 => "p75",
        }
    }
}

impl SpatialSummary {
    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Mean => self.mean,
            Statistic::Max => self.max,
            Statistic::Min => self.min,
            Statistic::P25 => self.p25,
            Statistic::P75 => self.p75,
        }
    }
}

/// Mean, max, min and the 25th/75th percentiles of the grid values.
/// Percentiles interpolate linearly between the closest order statistics.
pub fn spatial_aggregate(values: &[f64]) -> Result<SpatialSummary> {
    if values.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(SpatialSummary {
        mean: sorted.iter().sum::<f64>() / n as f64,
        max: sorted[n - 1],
        min: sorted[0],
        p25: percentile_sorted(&sorted, 0.25),
        p75: percentile_sorted(&sorted, 0.75),
    })
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Keep grids whose lead time lies in `[min_h, max_h]`. When several
/// reference times survive for one valid time and variable, only the most
/// recent forecast is kept.
pub fn lead_time_filter(grids: &[RawWeatherGrid], min_h: f64, max_h: f64) -> Result<Vec<RawWeatherGrid>> {
    if !(min_h < max_h) {
        return Err(Error::InvalidParameter(format!(
            "lead-time window [{min_h}, {max_h}] is empty"
        )));
    }
    let mut latest: BTreeMap<(DateTime<Utc>, &str), &RawWeatherGrid> = BTreeMap::new();
    for g in grids {
        let flt = g.lead_time_hours();
        if flt < min_h || flt > max_h {
            continue;
        }
        latest
            .entry((g.valid_time, g.variable.as_str()))
            .and_modify(|cur| {
                if g.reference_time > cur.reference_time {
                    *cur = g;
                }
            })
            .or_insert(g);
    }
    Ok(latest.into_values().cloned().collect())
}

/// Linear interpolation of a series onto the :00/:30 boundaries spanned by
/// it. Input values are reproduced exactly at boundary timestamps.
pub fn resample_halfhour(series: &[(DateTime<Utc>, f64)]) -> Result<Vec<(DateTime<Utc>, f64)>> {
    if series.len() < 2 || series.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::CannotInterpolate);
    }
    let first = series[0].0.timestamp();
    let last = series[series.len() - 1].0.timestamp();
    let mut t = first.div_euclid(HALF_HOUR) * HALF_HOUR;
    if t < first {
        t += HALF_HOUR;
    }
    let mut out = Vec::new();
    let mut seg = 0;
    while t <= last {
        while series[seg + 1].0.timestamp() < t {
            seg += 1;
        }
        let (t0, v0) = (series[seg].0.timestamp(), series[seg].1);
        let (t1, v1) = (series[seg + 1].0.timestamp(), series[seg + 1].1);
        let v = if t == t0 {
            v0
        } else if t == t1 {
            v1
        } else {
            v0 + (v1 - v0) * (t - t0) as f64 / (t1 - t0) as f64
        };
        out.push((DateTime::from_timestamp(t, 0).expect("timestamp in range"), v));
        t += HALF_HOUR;
    }
    Ok(out)
}

/// Half-hour index within the UTC day, 0..=47.
pub fn period_of_day(ts: DateTime<Utc>) -> u32 {
    ts.hour() * 2 + ts.minute() / 30
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Wind,
    Solar,
    Total,
}

impl std::str::FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wind" => Ok(Kind::Wind),
            "solar" => Ok(Kind::Solar),
            "total" => Ok(Kind::Total),
            other => Err(Error::parse("kind", format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Dwd,
    Gfs,
    Merged,
}

impl std::str::FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dwd" => Ok(Source::Dwd),
            "gfs" => Ok(Source::Gfs),
            "merged" => Ok(Source::Merged),
            other => Err(Error::parse("source", format!("unknown source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub timestamp: DateTime<Utc>,
    /// Issue time of the weather forecast behind the features, when known.
    pub reference_time: Option<DateTime<Utc>>,
    pub features: Vec<f64>,
    pub target: Option<f64>,
}

/// Rows sharing one named column schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
    pub kind: Kind,
    pub source: Source,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<FeatureRow>, kind: Kind, source: Source) -> Result<Self> {
        let ds = Self {
            columns,
            rows,
            kind,
            source,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.rows.iter().find(|r| r.features.len() != self.columns.len()) {
            return Err(Error::LengthMismatch {
                what: "row features vs columns",
                left: r.features.len(),
                right: self.columns.len(),
            });
        }
        if self.rows.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::UncleanDataset("timestamps not strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        self.rows.iter().map(|r| r.timestamp).collect()
    }

    /// Targets of every row; errors if any row is unaligned.
    pub fn targets(&self) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                r.target
                    .ok_or_else(|| Error::UncleanDataset(format!("row {} has no target", r.timestamp)))
            })
            .collect()
    }

    /// A dataset with the same schema holding the rows selected by `keep`.
    pub fn filter(&self, keep: impl Fn(&FeatureRow) -> bool) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            kind: self.kind,
            source: self.source,
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            rows: self.rows[range].to_vec(),
            kind: self.kind,
            source: self.source,
        }
    }
}

fn shifted_name(base: &str, offset: i32) -> String {
    match offset {
        0 => base.to_string(),
        o if o < 0 => format!("{base}_lag{}", -o),
        o => format!("{base}_lead{o}"),
    }
}

/// Expand every column into one column per half-hour offset (negative looks
/// back, positive looks ahead). Rows whose shifted neighbours are missing
/// are dropped.
pub fn temporal_shift_features(ds: &Dataset, offsets: &[i32]) -> Dataset {
    let all: Vec<usize> = (0..ds.columns.len()).collect();
    temporal_shift_columns(ds, &all, offsets)
}

/// Like [`temporal_shift_features`] but only the listed columns are expanded;
/// the others are carried over unshifted in their original position.
pub fn temporal_shift_columns(ds: &Dataset, shift: &[usize], offsets: &[i32]) -> Dataset {
    let by_time: HashMap<i64, usize> = ds
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.timestamp.timestamp(), i))
        .collect();

    let mut columns = Vec::new();
    for (c, name) in ds.columns.iter().enumerate() {
        if shift.contains(&c) {
            columns.extend(offsets.iter().map(|&o| shifted_name(name, o)));
        } else {
            columns.push(name.clone());
        }
    }

    let rows = ds
        .rows
        .iter()
        .filter_map(|row| {
            let t = row.timestamp.timestamp();
            let neighbours: Option<Vec<&FeatureRow>> = offsets
                .iter()
                .map(|&o| by_time.get(&(t + o as i64 * HALF_HOUR)).map(|&i| &ds.rows[i]))
                .collect();
            let neighbours = neighbours?;
            let mut features = Vec::with_capacity(columns.len());
            for (c, &v) in row.features.iter().enumerate() {
                if shift.contains(&c) {
                    features.extend(neighbours.iter().map(|n| n.features[c]));
                } else {
                    features.push(v);
                }
            }
            Some(FeatureRow {
                timestamp: row.timestamp,
                reference_time: row.reference_time,
                features,
                target: row.target,
            })
        })
        .collect();

    Dataset {
        columns,
        rows,
        kind: ds.kind,
        source: ds.source,
    }
}

/// Drop rows with a NaN target or a target above capacity, and clamp
/// negative targets to zero. Rows without a target are left alone.
pub fn clean_targets(rows: Vec<FeatureRow>, capacity: f64) -> Vec<FeatureRow> {
    rows.into_iter()
        .filter_map(|mut r| {
            match r.target {
                Some(y) if y.is_nan() || y > capacity => return None,
                Some(y) if y < 0.0 => r.target = Some(0.0),
                _ => {}
            }
            Some(r)
        })
        .collect()
}

/// Which spatial statistics feed the model, and which of them get shifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePreset {
    pub shifted: Vec<(String, Vec<Statistic>)>,
    pub unshifted: Vec<(String, Vec<Statistic>)>,
    pub period_of_day: bool,
}

impl FeaturePreset {
    /// Max/mean/min of 100 m wind speed at offsets −1, 0, +1 (9 columns).
    pub fn wind() -> Self {
        Self {
            shifted: vec![(WIND_SPEED.into(), vec![Statistic::Max, Statistic::Mean, Statistic::Min])],
            unshifted: vec![],
            period_of_day: false,
        }
    }

    /// Shifted radiation max/mean/min, current cloud cover max/mean/min and
    /// the half-hour of day (13 columns).
    pub fn solar() -> Self {
        Self {
            shifted: vec![(
                SOLAR_RADIATION.into(),
                vec![Statistic::Max, Statistic::Mean, Statistic::Min],
            )],
            unshifted: vec![(CLOUD_COVER.into(), vec![Statistic::Max, Statistic::Mean, Statistic::Min])],
            period_of_day: true,
        }
    }

    pub fn for_kind(kind: Kind) -> Self {
        match kind {
            Kind::Solar => Self::solar(),
            _ => Self::wind(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub kind: Kind,
    pub source: Source,
    pub flt_min: f64,
    pub flt_max: f64,
    pub offsets: Vec<i32>,
    pub capacity: f64,
    pub preset: FeaturePreset,
}

impl PrepConfig {
    pub fn new(kind: Kind, source: Source) -> Self {
        Self {
            kind,
            source,
            flt_min: DEFAULT_FLT.0,
            flt_max: DEFAULT_FLT.1,
            offsets: vec![-1, 0, 1],
            capacity: f64::INFINITY,
            preset: FeaturePreset::for_kind(kind),
        }
    }
}

/// Build a modelling dataset from long-format weather records and a
/// half-hourly generation series.
pub fn prepare(records: &[WeatherRecord], energy: &[(DateTime<Utc>, f64)], cfg: &PrepConfig) -> Result<Dataset> {
    let grids = lead_time_filter(&group_grids(records), cfg.flt_min, cfg.flt_max)?;

    let mut by_variable: HashMap<&str, Vec<(DateTime<Utc>, DateTime<Utc>, SpatialSummary)>> = HashMap::new();
    for g in &grids {
        by_variable
            .entry(g.variable.as_str())
            .or_default()
            .push((g.valid_time, g.reference_time, spatial_aggregate(&g.values)?));
    }

    // One half-hourly series per (variable, statistic), in preset order.
    let specs = cfg
        .preset
        .shifted
        .iter()
        .map(|s| (s, true))
        .chain(cfg.preset.unshifted.iter().map(|s| (s, false)));
    let mut columns = Vec::new();
    let mut shift_cols = Vec::new();
    let mut series: Vec<BTreeMap<i64, f64>> = Vec::new();
    let mut reference: BTreeMap<i64, DateTime<Utc>> = BTreeMap::new();
    for ((variable, stats), shifted) in specs {
        let hourly = by_variable.get(variable.as_str()).ok_or_else(|| {
            Error::UncleanDataset(format!("no `{variable}` records inside the lead-time window"))
        })?;
        if reference.is_empty() {
            for (valid, refr, _) in hourly {
                reference.insert(valid.timestamp(), *refr);
            }
        }
        for &stat in stats {
            let points: Vec<(DateTime<Utc>, f64)> = hourly.iter().map(|(t, _, s)| (*t, s.get(stat))).collect();
            let half = resample_halfhour(&points)?;
            if shifted {
                shift_cols.push(columns.len());
            }
            columns.push(format!("{variable}_{}", stat.name()));
            series.push(half.into_iter().map(|(t, v)| (t.timestamp(), v)).collect());
        }
    }
    if cfg.preset.period_of_day {
        columns.push("period_of_day".into());
    }

    let targets: HashMap<i64, f64> = energy.iter().map(|(t, y)| (t.timestamp(), *y)).collect();
    let first = series.first().ok_or(Error::EmptyInput("feature preset"))?;
    let mut rows = Vec::new();
    for &t in first.keys() {
        let Some(values) = series.iter().map(|s| s.get(&t).copied()).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let ts = DateTime::from_timestamp(t, 0).expect("timestamp in range");
        let mut features = values;
        if cfg.preset.period_of_day {
            features.push(period_of_day(ts) as f64);
        }
        rows.push(FeatureRow {
            timestamp: ts,
            reference_time: reference.range(..=t).next_back().map(|(_, r)| *r),
            features,
            target: targets.get(&t).copied(),
        });
    }

    let base = Dataset::new(columns, rows, cfg.kind, cfg.source)?;
    let mut shifted = temporal_shift_columns(&base, &shift_cols, &cfg.offsets);
    shifted.rows.retain(|r| r.target.is_some());
    shifted.rows = clean_targets(shifted.rows, cfg.capacity);
    Ok(shifted)
}

/// Timestamp `steps` half-hours after `ts`.
pub fn add_half_hours(ts: DateTime<Utc>, steps: i64) -> DateTime<Utc> {
    ts + Duration::seconds(steps * HALF_HOUR)
}
