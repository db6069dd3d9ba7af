//! Scenario simulation: profiles, daily horizons, seasonal runs.

pub mod output;
pub mod profiles;
mod run;
mod scenario;

pub use profiles::{
    clear_sky, day_columns, day_types, load_profiles, synthetic_profiles, DayType, ProfileSet, SolarType,
    SyntheticSpec, WindType, STEPS_PER_DAY,
};
pub use run::{
    at_least, compare_capabilities, run_day, run_season, total_under, CapabilityComparison, DayRun, DaySummary,
    OrderingCheck, RunResult, SolveCache, ORDER_TOL_REL,
};
pub use scenario::{Horizon, ProfileSource, Scenario, ScenarioConfig, SolverSettings};

use crate::der::{DerError, Fleet};
use crate::network::{NetworkError, NetworkModel};
use crate::opf::{HorizonInputs, OpfError};
use crate::vsupport::VsError;
use chrono::{NaiveDate, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("profile error: {0}")]
    Profile(String),
    #[error("profiles do not cover {0}")]
    Coverage(NaiveDate),
    #[error("scenario configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Der(#[from] DerError),
    #[error(transparent)]
    Tariff(#[from] VsError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error("{date}: {source}")]
    Day { date: NaiveDate, source: Box<SimError> },
}

/// Transmission voltage setpoint: one value, or one per hour of day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VSetSchedule {
    Flat(f64),
    Hourly(Vec<f64>),
}

impl Default for VSetSchedule {
    fn default() -> Self {
        Self::Flat(1.0)
    }
}

impl VSetSchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        let vals = match self {
            Self::Flat(v) => std::slice::from_ref(v),
            Self::Hourly(v) if v.len() == 24 => v.as_slice(),
            Self::Hourly(v) => return Err(SimError::Config(format!("hourly V_set needs 24 values, got {}", v.len()))),
        };
        if vals.iter().any(|v| !(*v > 0.5 && *v < 1.5)) {
            return Err(SimError::Config("V_set values must lie in (0.5, 1.5) pu".into()));
        }
        Ok(())
    }

    pub fn at_hour(&self, hour: usize) -> f64 {
        match self {
            Self::Flat(v) => *v,
            Self::Hourly(v) => v[hour % 24],
        }
    }
}

/// Exogenous inputs of one calendar day at 15-minute resolution.
pub fn horizon_for_day(
    network: &NetworkModel,
    fleet: &Fleet,
    profiles: &ProfileSet,
    date: NaiveDate,
    v_set: &VSetSchedule,
) -> Result<HorizonInputs, SimError> {
    v_set.validate()?;
    let rows = profiles.day_range(date)?;
    let timestamps = profiles.timestamps[rows.clone()].to_vec();
    let scale = |name: Option<&str>| -> Result<Vec<f64>, SimError> {
        match name {
            Some(n) => Ok(profiles.column(n)?[rows.clone()].to_vec()),
            None => Ok(vec![1.0; rows.len()]),
        }
    };
    let n = rows.len();
    let nb = network.n_buses();
    let mut load_p = vec![vec![0.0; nb]; n];
    let mut load_q = vec![vec![0.0; nb]; n];
    for (j, bus) in network.buses().iter().enumerate() {
        if let Some(l) = &bus.load {
            let s = scale(l.profile.as_deref())?;
            for t in 0..n {
                load_p[t][j] = l.p * s[t];
                load_q[t][j] = l.q * s[t];
            }
        }
    }
    let mut dg_avail = vec![vec![0.0; fleet.dg.len()]; n];
    let mut dg_floor = vec![vec![0.0; fleet.dg.len()]; n];
    for (k, u) in fleet.dg.iter().enumerate() {
        let avail = scale(Some(&u.profile))?;
        let floor = match &u.p_min_profile {
            Some(p) => scale(Some(p))?,
            None => vec![0.0; n],
        };
        for t in 0..n {
            dg_avail[t][k] = u.p_rating * avail[t];
            dg_floor[t][k] = (u.p_rating * floor[t]).min(dg_avail[t][k]);
        }
    }
    let mut cl_baseline = vec![vec![0.0; fleet.loads.len()]; n];
    for (k, l) in fleet.loads.iter().enumerate() {
        let s = scale(Some(&l.profile))?;
        for t in 0..n {
            cl_baseline[t][k] = l.p_peak * s[t];
        }
    }
    let hours: Vec<usize> = timestamps.iter().map(|ts| ts.hour() as usize).collect();
    let inputs = HorizonInputs {
        dt: profiles::STEP_MINUTES as f64 / 60.0,
        source: hours.iter().map(|h| network.source_at_hour(*h)).collect(),
        v_set: hours.iter().map(|h| v_set.at_hour(*h)).collect(),
        timestamps,
        load_p,
        load_q,
        dg_avail,
        dg_floor,
        cl_baseline,
    };
    inputs.validate(network, fleet)?;
    Ok(inputs)
}
