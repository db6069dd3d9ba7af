//! Per-unit time-series profiles: CSV ingestion and synthetic generators.
//!
//! Synthetic days are built from a small set of day types so that a season
//! contains only a handful of distinct days.
//!
//! * PV, clear sky: `sin(π(h − 5)/14)^1.5` for `5 ≤ h ≤ 19`, else 0
//!   (peak 1.0 at 12:00). Partly cloudy days multiply by
//!   `1 − 0.45·c(h)`, overcast days by `0.3·(1 + 0.1·s(h))`, where `c ∈ [0, 1]`
//!   and `s ∈ [−1, 1]` are sums of three sinusoids with seeded phases.
//! * Wind: `0.12 + 0.08·s(h)` on calm days, `0.55 + 0.25·s(h)` on windy days.
//! * Loads: fixed hourly residential and commercial shapes, linearly
//!   interpolated to 15 minutes.
//! * `flat`: constant 1.

use super::SimError;
use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

pub const STEP_MINUTES: i64 = 15;
pub const STEPS_PER_DAY: usize = 96;
pub const MAX_PROFILE_VALUE: f64 = 1.2;

/// Named per-unit series on a common 15-minute grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSet {
    pub timestamps: Vec<NaiveDateTime>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl ProfileSet {
    /// Checks alignment, gaps and value range.
    pub fn validate(&self) -> Result<(), SimError> {
        let Some(first) = self.timestamps.first() else {
            return Err(SimError::Profile("no rows".into()));
        };
        for (k, ts) in self.timestamps.iter().enumerate() {
            if ts.second() != 0 || ts.nanosecond() != 0 || i64::from(ts.minute()) % STEP_MINUTES != 0 {
                return Err(SimError::Profile(format!("timestamp {ts} is not on the 15-minute grid")));
            }
            let expected = *first + Duration::minutes(STEP_MINUTES * k as i64);
            if *ts != expected {
                return Err(SimError::Profile(format!("expected {expected} at row {}, found {ts}", k + 1)));
            }
        }
        for (name, col) in &self.columns {
            if col.len() != self.timestamps.len() {
                return Err(SimError::Profile(format!("column {name} has {} values", col.len())));
            }
            if let Some((k, v)) = col.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && **v <= MAX_PROFILE_VALUE)) {
                return Err(SimError::Profile(format!(
                    "column {name} at {}: value {v} outside [0, {MAX_PROFILE_VALUE}]",
                    self.timestamps[k]
                )));
            }
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&[f64], SimError> {
        self.columns.get(name).map(Vec::as_slice).ok_or_else(|| SimError::Profile(format!("no profile column '{name}'")))
    }

    /// Row range of one calendar day (all 96 steps must be present).
    pub fn day_range(&self, date: NaiveDate) -> Result<std::ops::Range<usize>, SimError> {
        let start = date.and_time(NaiveTime::MIN);
        let first = self.timestamps.first().ok_or_else(|| SimError::Coverage(date))?;
        let offset = (start - *first).num_minutes();
        if offset < 0 || offset % STEP_MINUTES != 0 {
            return Err(SimError::Coverage(date));
        }
        let k = (offset / STEP_MINUTES) as usize;
        if k + STEPS_PER_DAY > self.timestamps.len() {
            return Err(SimError::Coverage(date));
        }
        Ok(k..k + STEPS_PER_DAY)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.columns.keys().cloned());
        w.write_record(&header)?;
        for (k, ts) in self.timestamps.iter().enumerate() {
            let mut row = vec![ts.format(crate::vsupport::TIMESTAMP_FORMAT).to_string()];
            row.extend(self.columns.values().map(|c| format!("{:.6}", c[k])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a CSV with a `timestamp` column followed by named per-unit columns.
pub fn load_profiles<R: Read>(input: R) -> Result<ProfileSet, SimError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("timestamp") {
        return Err(SimError::Profile("first column must be 'timestamp'".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut timestamps = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let ts = rec.get(0).unwrap_or_default();
        let ts = crate::vsupport::parse_timestamp(ts)
            .ok_or_else(|| SimError::Profile(format!("row {}: bad timestamp '{ts}'", line + 1)))?;
        timestamps.push(ts);
        for (k, col) in cols.iter_mut().enumerate() {
            let raw = rec.get(k + 1).unwrap_or_default().trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| SimError::Profile(format!("row {}, column {}: bad number '{raw}'", line + 1, names[k])))?;
            col.push(v);
        }
    }
    let set = ProfileSet { timestamps, columns: names.into_iter().zip(cols).collect() };
    set.validate()?;
    Ok(set)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolarType {
    Clear,
    Partly,
    Overcast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindType {
    Calm,
    Windy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DayType {
    pub solar: SolarType,
    pub wind: WindType,
}

/// Parameters of a synthetic profile set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
    /// Probabilities of clear and partly cloudy days (overcast takes the rest).
    #[serde(default = "default_solar_weights")]
    pub solar_weights: [f64; 2],
    #[serde(default = "default_windy")]
    pub windy_probability: f64,
    /// Day types forced for particular dates.
    #[serde(default)]
    pub pinned: BTreeMap<NaiveDate, DayType>,
}

impl SyntheticSpec {
    /// Default weather mix over `start..=end`.
    pub fn new(seed: u64, start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            seed,
            start,
            end,
            solar_weights: default_solar_weights(),
            windy_probability: default_windy(),
            pinned: BTreeMap::new(),
        }
    }
}

fn default_solar_weights() -> [f64; 2] {
    [0.5, 0.3]
}

fn default_windy() -> f64 {
    0.4
}

const RESIDENTIAL: [f64; 24] = [
    0.35, 0.30, 0.28, 0.27, 0.28, 0.33, 0.45, 0.55, 0.55, 0.50, 0.48, 0.50, 0.52, 0.48, 0.45, 0.47, 0.55, 0.70, 0.90,
    1.00, 0.95, 0.80, 0.62, 0.45,
];
const COMMERCIAL: [f64; 24] = [
    0.35, 0.33, 0.32, 0.32, 0.33, 0.38, 0.50, 0.70, 0.88, 0.95, 1.00, 1.00, 0.95, 0.97, 0.98, 0.95, 0.88, 0.75, 0.60,
    0.50, 0.45, 0.42, 0.40, 0.37,
];

/// Clear-sky PV at hour `h`.
pub fn clear_sky(h: f64) -> f64 {
    if (5.0..=19.0).contains(&h) {
        (PI * (h - 5.0) / 14.0).sin().max(0.0).powf(1.5)
    } else {
        0.0
    }
}

fn hourly(shape: &[f64; 24], h: f64) -> f64 {
    let k = h.floor() as usize % 24;
    let f = h - h.floor();
    shape[k] * (1.0 - f) + shape[(k + 1) % 24] * f
}

/// Smooth seeded signal in `[−1, 1]`.
struct Wobble {
    terms: [(f64, f64); 3],
}

impl Wobble {
    fn new(rng: &mut ChaCha8Rng, periods: [f64; 3]) -> Self {
        let mut terms = [(0.0, 0.0); 3];
        for (t, p) in terms.iter_mut().zip(periods) {
            *t = (p, rng.random_range(0.0..2.0 * PI));
        }
        Self { terms }
    }

    fn at(&self, h: f64) -> f64 {
        self.terms.iter().map(|(p, phi)| (2.0 * PI * h / p + phi).sin()).sum::<f64>() / 3.0
    }
}

/// The 96 values of every column for one day type.
pub fn day_columns(seed: u64, day: DayType) -> BTreeMap<String, Vec<f64>> {
    let code = match day.solar {
        SolarType::Clear => 1,
        SolarType::Partly => 2,
        SolarType::Overcast => 3,
    } * 10
        + match day.wind {
            WindType::Calm => 1,
            WindType::Windy => 2,
        };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (code as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let clouds = Wobble::new(&mut rng, [1.3, 2.9, 4.7]);
    let gusts = Wobble::new(&mut rng, [3.0, 7.0, 11.0]);
    let hours: Vec<f64> = (0..STEPS_PER_DAY).map(|k| k as f64 * 0.25).collect();
    let pv = hours
        .iter()
        .map(|&h| {
            let c = clear_sky(h);
            match day.solar {
                SolarType::Clear => c,
                SolarType::Partly => c * (1.0 - 0.45 * (0.5 + 0.5 * clouds.at(h))),
                SolarType::Overcast => 0.3 * c * (1.0 + 0.1 * clouds.at(h)),
            }
        })
        .collect();
    let wind = hours
        .iter()
        .map(|&h| match day.wind {
            WindType::Calm => 0.12 + 0.08 * gusts.at(h),
            WindType::Windy => 0.55 + 0.25 * gusts.at(h),
        })
        .map(|v: f64| v.clamp(0.0, 1.0))
        .collect();
    let mut cols = BTreeMap::new();
    cols.insert("pv".to_string(), pv);
    cols.insert("wind".to_string(), wind);
    cols.insert("load_res".to_string(), hours.iter().map(|&h| hourly(&RESIDENTIAL, h)).collect());
    cols.insert("load_com".to_string(), hours.iter().map(|&h| hourly(&COMMERCIAL, h)).collect());
    cols.insert("flat".to_string(), vec![1.0; STEPS_PER_DAY]);
    cols
}

/// Day type of every date in the requested range, drawn in date order.
pub fn day_types(spec: &SyntheticSpec) -> Result<Vec<(NaiveDate, DayType)>, SimError> {
    if spec.end < spec.start {
        return Err(SimError::Config(format!("synthetic range ends ({}) before it starts ({})", spec.end, spec.start)));
    }
    let [w_clear, w_partly] = spec.solar_weights;
    if !(w_clear >= 0.0 && w_partly >= 0.0 && w_clear + w_partly <= 1.0) || !(0.0..=1.0).contains(&spec.windy_probability) {
        return Err(SimError::Config("synthetic day-type probabilities must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    let mut d = spec.start;
    while d <= spec.end {
        let u: f64 = rng.random();
        let w: f64 = rng.random();
        let drawn = DayType {
            solar: if u < w_clear {
                SolarType::Clear
            } else if u < w_clear + w_partly {
                SolarType::Partly
            } else {
                SolarType::Overcast
            },
            wind: if w < spec.windy_probability { WindType::Windy } else { WindType::Calm },
        };
        out.push((d, spec.pinned.get(&d).copied().unwrap_or(drawn)));
        d = d.succ_opt().ok_or_else(|| SimError::Config("date overflow".into()))?;
    }
    Ok(out)
}

/// Synthetic profile set covering the requested date range.
pub fn synthetic_profiles(spec: &SyntheticSpec) -> Result<ProfileSet, SimError> {
    let days = day_types(spec)?;
    let mut cache: BTreeMap<DayType, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut timestamps = Vec::with_capacity(days.len() * STEPS_PER_DAY);
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (date, ty) in days {
        let cols = cache.entry(ty).or_insert_with(|| day_columns(spec.seed, ty));
        let start = date.and_time(NaiveTime::MIN);
        timestamps.extend((0..STEPS_PER_DAY).map(|k| start + Duration::minutes(STEP_MINUTES * k as i64)));
        for (name, vals) in cols.iter() {
            columns.entry(name.clone()).or_default().extend_from_slice(vals);
        }
    }
    let set = ProfileSet { timestamps, columns };
    set.validate()?;
    Ok(set)
}

/// `YYYY-MM-DD` of a timestamp's day, used in reports.
pub fn date_of(ts: &NaiveDateTime) -> NaiveDate {
    NaiveDate::from_ymd_opt(ts.year(), ts.month(), ts.day()).expect("valid date")
}
