//! Scenario configuration files.

use super::profiles::{load_profiles, synthetic_profiles, ProfileSet, SyntheticSpec, STEPS_PER_DAY};
use super::{SimError, VSetSchedule};
use crate::der::{load_fleet, CapabilityMode, Fleet};
use crate::network::{load_network, NetworkModel};
use crate::opf::{CostCoefficients, OpfOptions, VsMode};
use crate::vsupport::{resolve_tariff, TariffFile, TariffSchedule};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileSource {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

/// Daily horizon. Only 96 × 15 min is supported since profiles live on a
/// 15-minute grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub steps: usize,
    pub dt_h: f64,
}

impl Default for Horizon {
    fn default() -> Self {
        Self { steps: STEPS_PER_DAY, dt_h: 0.25 }
    }
}

/// Overrides of the OPF solver settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub big_m: Option<f64>,
    /// Relative MIP gap.
    pub gap: Option<f64>,
    pub node_limit: Option<usize>,
    pub period_node_limit: Option<usize>,
    pub max_outer: Option<usize>,
    pub tol: Option<f64>,
}

impl SolverSettings {
    pub fn apply(&self, mut o: OpfOptions) -> OpfOptions {
        if let Some(v) = self.v_min {
            o.v_min = v;
        }
        if let Some(v) = self.v_max {
            o.v_max = v;
        }
        if let Some(v) = self.big_m {
            o.big_m = v;
        }
        if let Some(v) = self.gap {
            o.bnb.rel_gap = v;
        }
        if let Some(v) = self.node_limit {
            o.bnb.node_limit = v;
        }
        if let Some(v) = self.period_node_limit {
            o.period_node_limit = v;
        }
        if let Some(v) = self.max_outer {
            o.max_outer = v;
        }
        if let Some(v) = self.tol {
            o.tol = v;
        }
        o
    }
}

fn default_tariff() -> String {
    "preset-2018".into()
}

fn default_vs_mode() -> VsMode {
    VsMode::None
}

/// Scenario file. Relative paths are resolved against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: PathBuf,
    pub fleet: PathBuf,
    pub profiles: ProfileSource,
    /// Built-in preset name, tariff file, or `file#preset`.
    #[serde(default = "default_tariff")]
    pub tariff: String,
    #[serde(default = "default_vs_mode")]
    pub vs_mode: VsMode,
    /// Overrides the capability mode of every generator.
    #[serde(default)]
    pub capability: Option<CapabilityMode>,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default)]
    pub v_set: VSetSchedule,
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
    #[serde(default)]
    pub costs: CostCoefficients,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon != Horizon::default() {
            return Err(SimError::Config(format!(
                "horizon must be {} steps of {} h, got {} × {}",
                STEPS_PER_DAY,
                Horizon::default().dt_h,
                self.horizon.steps,
                self.horizon.dt_h
            )));
        }
        if self.end < self.start {
            return Err(SimError::Config(format!("date range ends ({}) before it starts ({})", self.end, self.start)));
        }
        self.v_set.validate()
    }
}

/// A loaded, validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub network: NetworkModel,
    /// Fleet with the capability override applied.
    pub fleet: Fleet,
    pub profiles: ProfileSet,
    pub tariff: TariffSchedule,
    pub options: OpfOptions,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Scenario {
    /// Loads a scenario file.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let cfg = ScenarioConfig::from_json_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(cfg, base)
    }

    pub fn from_config(mut config: ScenarioConfig, base: &Path) -> Result<Self, SimError> {
        config.validate()?;
        config.costs.validate()?;
        config.network = resolve(base, &config.network);
        config.fleet = resolve(base, &config.fleet);
        if let ProfileSource::File(p) = &mut config.profiles {
            *p = resolve(base, p);
        }
        let builtin = TariffFile::builtin();
        if !builtin.presets.iter().any(|p| p.name == config.tariff) {
            let (file, preset) = match config.tariff.split_once('#') {
                Some((f, n)) => (f.to_string(), Some(n.to_string())),
                None => (config.tariff.clone(), None),
            };
            let file = resolve(base, Path::new(&file)).display().to_string();
            config.tariff = match preset {
                Some(n) => format!("{file}#{n}"),
                None => file,
            };
        }
        let network = load_network(&config.network)?;
        let fleet = load_fleet(&config.fleet, network.base_mva)?;
        let fleet = match config.capability {
            Some(mode) => fleet.with_capability(mode),
            None => fleet,
        };
        fleet.check_buses(&network)?;
        let profiles = match &config.profiles {
            ProfileSource::File(p) => load_profiles(std::fs::File::open(p)?)?,
            ProfileSource::Synthetic(spec) => synthetic_profiles(spec)?,
        };
        let tariff = resolve_tariff(&config.tariff)?;
        let options = config.solver.apply(OpfOptions::default());
        Ok(Self { config, network, fleet, profiles, tariff, options })
    }

    /// Same scenario under another scheme and capability mode.
    pub fn variant(&self, vs_mode: VsMode, capability: Option<CapabilityMode>) -> Self {
        let mut s = self.clone();
        s.config.vs_mode = vs_mode;
        if let Some(mode) = capability {
            s.config.capability = Some(mode);
            s.fleet = s.fleet.with_capability(mode);
        }
        s
    }

    /// Same scenario with another V_set schedule.
    pub fn with_v_set(&self, v_set: VSetSchedule) -> Result<Self, SimError> {
        v_set.validate()?;
        let mut s = self.clone();
        s.config.v_set = v_set;
        Ok(s)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.config.start.iter_days().take_while(|d| *d <= self.config.end).collect()
    }

    pub fn vs_mode(&self) -> VsMode {
        self.config.vs_mode
    }
}
