//! Controllable resources: inverter-based generators, batteries and
//! shiftable loads, exposed as bounds and constraint blocks on a [`Model`].
//!
//! All quantities are stored in per-unit of the system base (energy in
//! pu·h). The fleet file uses MVA for generators and kW/kWh for storage and
//! loads; conversion happens in [`Fleet::from_file`].

use crate::model::{LinExpr, Model, Var};
use crate::network::{BusId, NetworkModel};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Threshold of the ε-approximation of charge/discharge exclusivity.
pub const BESS_EPSILON: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum DerError {
    #[error("{unit}: active power {p} exceeds inverter rating {s_inv}")]
    PowerAboveRating { unit: String, p: f64, s_inv: f64 },
    #[error("{unit}: {reason}")]
    InvalidUnit { unit: String, reason: String },
    #[error("{unit}: bus {bus} not in network")]
    UnknownBus { unit: String, bus: BusId },
    #[error("{unit}: shift block {shift} exceeds minimum baseline {min} at step {step}")]
    ShiftTooLarge { unit: String, shift: f64, min: f64, step: usize },
    #[error("horizon must contain at least one step")]
    EmptyHorizon,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed fleet description: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum CapabilityMode {
    #[serde(alias = "tri")]
    Triangular,
    #[serde(alias = "rect")]
    Rectangular,
    #[serde(alias = "semi")]
    Semicircle,
}

impl CapabilityMode {
    pub const ALL: [CapabilityMode; 3] = [Self::Triangular, Self::Rectangular, Self::Semicircle];

    pub fn short(self) -> &'static str {
        match self {
            Self::Triangular => "tri",
            Self::Rectangular => "rect",
            Self::Semicircle => "semi",
        }
    }
}

impl std::str::FromStr for CapabilityMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tri" | "triangular" => Ok(Self::Triangular),
            "rect" | "rectangular" => Ok(Self::Rectangular),
            "semi" | "semicircle" => Ok(Self::Semicircle),
            _ => Err(format!("unknown capability mode '{s}' (tri, rect, semi)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgKind {
    Pv,
    Wt,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DgUnit {
    pub name: String,
    pub bus: BusId,
    pub kind: DgKind,
    /// Installed active capacity.
    pub p_rating: f64,
    /// Inverter apparent rating.
    pub s_inv: f64,
    pub mode: CapabilityMode,
    pub cos_phi_max: f64,
    /// Profile column giving available power as a fraction of `p_rating`.
    pub profile: String,
    /// Optional profile column for the injection floor.
    pub p_min_profile: Option<String>,
}

impl DgUnit {
    pub fn tan_phi(&self) -> f64 {
        let c = self.cos_phi_max;
        (1.0 - c * c).sqrt() / c
    }

    /// Whether triangular ⊆ rectangular ⊆ semicircle holds for this unit;
    /// the rectangle's corner `(P_rated, tan φ·P_rated)` must fit in `S_inv`.
    pub fn regions_nest(&self) -> bool {
        self.p_rating * self.p_rating * (1.0 + self.tan_phi().powi(2)) <= self.s_inv * self.s_inv * (1.0 + 1e-12)
    }

    fn validate(&self) -> Result<(), DerError> {
        let bad = |reason: &str| Err(DerError::InvalidUnit { unit: self.name.clone(), reason: reason.into() });
        if !(self.p_rating > 0.0) {
            return bad("rating must be positive");
        }
        if !(self.s_inv >= self.p_rating) {
            return bad("inverter rating must be at least the installed capacity");
        }
        if !(self.cos_phi_max > 0.0 && self.cos_phi_max <= 1.0) {
            return bad("cos φ_max must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Feasible reactive power for a given active injection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReactiveSet {
    Interval { lo: f64, hi: f64 },
    /// `P² + Q² ≤ s²` at fixed `P`.
    Disk { s: f64, p: f64 },
}

impl ReactiveSet {
    pub fn q_max(&self) -> f64 {
        match *self {
            Self::Interval { hi, .. } => hi,
            Self::Disk { s, p } => (s * s - p * p).max(0.0).sqrt(),
        }
    }

    pub fn q_min(&self) -> f64 {
        match *self {
            Self::Interval { lo, .. } => lo,
            Self::Disk { .. } => -self.q_max(),
        }
    }

    pub fn contains(&self, q: f64, tol: f64) -> bool {
        match *self {
            Self::Interval { lo, hi } => q >= lo - tol && q <= hi + tol,
            Self::Disk { s, p } => (p * p + q * q).sqrt() <= s + tol,
        }
    }
}

/// Reactive capability of `unit` at active injection `p_now`.
pub fn capability_bounds(unit: &DgUnit, p_now: f64) -> Result<ReactiveSet, DerError> {
    if p_now > unit.s_inv || p_now < 0.0 {
        return Err(DerError::PowerAboveRating { unit: unit.name.clone(), p: p_now, s_inv: unit.s_inv });
    }
    let tan = unit.tan_phi();
    Ok(match unit.mode {
        CapabilityMode::Triangular => ReactiveSet::Interval { lo: -tan * p_now, hi: tan * p_now },
        CapabilityMode::Rectangular => ReactiveSet::Interval { lo: -tan * unit.p_rating, hi: tan * unit.p_rating },
        CapabilityMode::Semicircle => ReactiveSet::Disk { s: unit.s_inv, p: p_now },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Complementarity {
    Binary,
    Epsilon,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BessUnit {
    pub name: String,
    pub bus: BusId,
    pub e_cap: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub e_start: f64,
    pub p_max: f64,
    pub s_max: f64,
    pub eta: f64,
    pub mode: Complementarity,
}

impl BessUnit {
    pub fn e_min(&self) -> f64 {
        self.soc_min * self.e_cap
    }

    pub fn e_max(&self) -> f64 {
        self.soc_max * self.e_cap
    }

    fn validate(&self) -> Result<(), DerError> {
        let bad = |reason: &str| Err(DerError::InvalidUnit { unit: self.name.clone(), reason: reason.into() });
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return bad("need 0 ≤ SoC_min < SoC_max ≤ 1");
        }
        if !(self.e_cap > 0.0) {
            return bad("energy capacity must be positive");
        }
        if !(self.e_start >= self.e_min() - 1e-12 && self.e_start <= self.e_max() + 1e-12) {
            return bad("E_start outside the SoC window");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("efficiency must lie in (0, 1]");
        }
        if !(self.p_max >= 0.0) || !(self.s_max >= self.p_max) {
            return bad("need 0 ≤ P_max ≤ S_max");
        }
        Ok(())
    }
}

/// Energy after one step: `E + (η·P_ch − P_dis/η)·Δt`.
pub fn bess_step(e_prev: f64, p_ch: f64, p_dis: f64, eta: f64, dt: f64) -> f64 {
    e_prev + (eta * p_ch - p_dis / eta) * dt
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControllableLoad {
    pub name: String,
    pub bus: BusId,
    /// Peak baseline demand; the baseline is `p_peak · profile(t)`.
    pub p_peak: f64,
    pub profile: String,
    pub p_shift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fleet {
    pub dg: Vec<DgUnit>,
    pub bess: Vec<BessUnit>,
    pub loads: Vec<ControllableLoad>,
}

impl Fleet {
    pub fn empty() -> Self {
        Self { dg: Vec::new(), bess: Vec::new(), loads: Vec::new() }
    }

    /// Same fleet with every generator switched to `mode`.
    pub fn with_capability(&self, mode: CapabilityMode) -> Self {
        let mut f = self.clone();
        for u in &mut f.dg {
            u.mode = mode;
        }
        f
    }

    pub fn from_json_str(text: &str, base_mva: f64) -> Result<Self, DerError> {
        let file: FleetFile = serde_json::from_str(text)?;
        Self::from_file(&file, base_mva)
    }

    pub fn from_file(file: &FleetFile, base_mva: f64) -> Result<Self, DerError> {
        let kw = 1e-3 / base_mva;
        let dg = file
            .dg
            .iter()
            .map(|d| DgUnit {
                name: d.name.clone(),
                bus: d.bus,
                kind: d.kind,
                p_rating: d.rating_mva / base_mva,
                s_inv: d.rating_mva * d.oversize / base_mva,
                mode: d.capability,
                cos_phi_max: d.cos_phi_max,
                profile: d.profile.clone(),
                p_min_profile: d.p_min_profile.clone(),
            })
            .collect();
        let bess = file
            .bess
            .iter()
            .map(|b| BessUnit {
                name: b.name.clone(),
                bus: b.bus,
                e_cap: b.capacity_kwh * kw,
                soc_min: b.soc_min,
                soc_max: b.soc_max,
                e_start: b.e_start_kwh * kw,
                p_max: b.p_max_kw * kw,
                s_max: b.s_max_kva * kw,
                eta: b.efficiency,
                mode: b.complementarity,
            })
            .collect();
        let loads = file
            .controllable_loads
            .iter()
            .map(|l| ControllableLoad {
                name: l.name.clone(),
                bus: l.bus,
                p_peak: l.p_kw * kw,
                profile: l.profile.clone(),
                p_shift: l.shift_kw * kw,
            })
            .collect();
        let fleet = Self { dg, bess, loads };
        fleet.validate()?;
        Ok(fleet)
    }

    pub fn validate(&self) -> Result<(), DerError> {
        for u in &self.dg {
            u.validate()?;
        }
        for b in &self.bess {
            b.validate()?;
        }
        for l in &self.loads {
            if !(l.p_shift >= 0.0) || !(l.p_peak >= 0.0) {
                return Err(DerError::InvalidUnit { unit: l.name.clone(), reason: "negative demand".into() });
            }
        }
        Ok(())
    }

    /// Checks that every unit sits on a bus of `network`.
    pub fn check_buses(&self, network: &NetworkModel) -> Result<(), DerError> {
        let units = self
            .dg
            .iter()
            .map(|u| (&u.name, u.bus))
            .chain(self.bess.iter().map(|u| (&u.name, u.bus)))
            .chain(self.loads.iter().map(|u| (&u.name, u.bus)));
        for (name, bus) in units {
            match network.bus_index(bus) {
                Some(i) if i != 0 => {}
                _ => return Err(DerError::UnknownBus { unit: name.clone(), bus }),
            }
        }
        Ok(())
    }
}

pub fn load_fleet(path: &Path, base_mva: f64) -> Result<Fleet, DerError> {
    Fleet::from_json_str(&std::fs::read_to_string(path)?, base_mva)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetFile {
    #[serde(default)]
    pub dg: Vec<DgSpec>,
    #[serde(default)]
    pub bess: Vec<BessSpec>,
    #[serde(default)]
    pub controllable_loads: Vec<LoadSpec>,
}

fn default_oversize() -> f64 {
    1.1
}

fn default_cos_phi() -> f64 {
    0.9
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgSpec {
    pub name: String,
    pub bus: BusId,
    pub kind: DgKind,
    pub rating_mva: f64,
    /// `S_inv / rating`.
    #[serde(default = "default_oversize")]
    pub oversize: f64,
    #[serde(default = "default_cos_phi")]
    pub cos_phi_max: f64,
    pub capability: CapabilityMode,
    pub profile: String,
    #[serde(default)]
    pub p_min_profile: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BessSpec {
    pub name: String,
    pub bus: BusId,
    pub capacity_kwh: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub e_start_kwh: f64,
    pub p_max_kw: f64,
    pub s_max_kva: f64,
    pub efficiency: f64,
    #[serde(default = "default_complementarity")]
    pub complementarity: Complementarity,
}

fn default_complementarity() -> Complementarity {
    Complementarity::Epsilon
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub name: String,
    pub bus: BusId,
    pub p_kw: f64,
    pub profile: String,
    pub shift_kw: f64,
}

/// Variables of one generator in one step.
#[derive(Clone, Copy, Debug)]
pub struct DgVars {
    pub p: Var,
    pub q: Var,
    /// Epigraph of `|q|`.
    pub q_abs: Var,
}

/// Adds `P_g ∈ [p_min, p_avail]` and the capability constraint of `unit`.
pub fn add_dg_step(model: &mut Model, unit: &DgUnit, tag: &str, p_min: f64, p_avail: f64) -> DgVars {
    let p_hi = p_avail.min(unit.s_inv).max(0.0);
    let p_lo = p_min.clamp(0.0, p_hi);
    let tan = unit.tan_phi();
    let q_hi = match unit.mode {
        CapabilityMode::Triangular => tan * p_hi,
        CapabilityMode::Rectangular => tan * unit.p_rating,
        CapabilityMode::Semicircle => (unit.s_inv * unit.s_inv - p_lo * p_lo).sqrt(),
    };
    let p = model.add_var(format!("pg[{tag}]"), p_lo, p_hi);
    let q = model.add_var(format!("qg[{tag}]"), -q_hi, q_hi);
    let q_abs = model.add_var(format!("qabs[{tag}]"), 0.0, q_hi);
    model.add_ge(format!("qabs+[{tag}]"), q_abs.into(), q.into());
    model.add_ge(format!("qabs-[{tag}]"), q_abs.into(), -LinExpr::from(q));
    match unit.mode {
        CapabilityMode::Triangular => {
            model.add_le(format!("tri+[{tag}]"), q.into(), LinExpr::term(p, tan));
            model.add_le(format!("tri-[{tag}]"), -LinExpr::from(q), LinExpr::term(p, tan));
        }
        CapabilityMode::Rectangular => {}
        CapabilityMode::Semicircle => {
            model.add_cone(format!("semi[{tag}]"), LinExpr::constant(unit.s_inv), vec![p.into(), q.into()]);
        }
    }
    DgVars { p, q, q_abs }
}

/// Variables of one battery in one step.
#[derive(Clone, Copy, Debug)]
pub struct BessStepVars {
    pub p_ch: Var,
    pub p_dis: Var,
    pub q: Var,
    pub z: Option<Var>,
}

/// Power, reactive and exclusivity constraints of one step. `deficit` is
/// the local `P_l − P_g^max`. With `fixed = Some((p_ch, p_dis))` the active
/// powers are pinned and no exclusivity rows are emitted.
pub fn add_bess_step(
    model: &mut Model,
    unit: &BessUnit,
    tag: &str,
    deficit: f64,
    fixed: Option<(f64, f64)>,
) -> BessStepVars {
    let (ch_bounds, dis_bounds) = match fixed {
        Some((c, d)) => ((c, c), (d, d)),
        None => ((0.0, unit.p_max), (0.0, unit.p_max)),
    };
    let p_ch = model.add_var(format!("pch[{tag}]"), ch_bounds.0, ch_bounds.1);
    let p_dis = model.add_var(format!("pdis[{tag}]"), dis_bounds.0, dis_bounds.1);
    let q = model.add_var(format!("qb[{tag}]"), -unit.s_max, unit.s_max);
    model.add_cone(format!("bess_s_ch[{tag}]"), LinExpr::constant(unit.s_max), vec![q.into(), p_ch.into()]);
    model.add_cone(format!("bess_s_dis[{tag}]"), LinExpr::constant(unit.s_max), vec![q.into(), p_dis.into()]);
    let mut z = None;
    if fixed.is_none() {
        match unit.mode {
            Complementarity::Epsilon => {
                model.add_le(format!("eps_ch[{tag}]"), LinExpr::term(p_ch, deficit), LinExpr::constant(BESS_EPSILON));
                model.add_ge(format!("eps_dis[{tag}]"), LinExpr::term(p_dis, deficit), LinExpr::constant(-BESS_EPSILON));
            }
            Complementarity::Binary => {
                let zc = model.add_binary(format!("zb[{tag}]"));
                model.add_le(format!("bin_ch[{tag}]"), p_ch.into(), LinExpr::term(zc, unit.p_max));
                model.add_le(
                    format!("bin_dis[{tag}]"),
                    p_dis.into(),
                    LinExpr::constant(unit.p_max) - LinExpr::term(zc, unit.p_max),
                );
                z = Some(zc);
            }
        }
    }
    BessStepVars { p_ch, p_dis, q, z }
}

/// Energy state variables and dynamics over consecutive steps: `E_0 = E_start`
/// before the first step, `E_N = E_start` after the last, SoC bounds in
/// between. Returns the energy after each step.
pub fn add_bess_dynamics(model: &mut Model, unit: &BessUnit, name: &str, steps: &[BessStepVars], dt: f64) -> Vec<Var> {
    let mut energy = Vec::with_capacity(steps.len());
    let mut prev = LinExpr::constant(unit.e_start);
    for (t, s) in steps.iter().enumerate() {
        let e = model.add_var(format!("e[{name},{t}]"), unit.e_min(), unit.e_max());
        let rhs = prev.clone() + LinExpr::term(s.p_ch, unit.eta * dt) - LinExpr::term(s.p_dis, dt / unit.eta);
        model.add_eq(format!("soc[{name},{t}]"), e.into(), rhs);
        prev = e.into();
        energy.push(e);
    }
    if let Some(&last) = energy.last() {
        model.add_eq(format!("terminal[{name}]"), last.into(), LinExpr::constant(unit.e_start));
    }
    energy
}

pub struct BessBlock {
    pub steps: Vec<BessStepVars>,
    pub energy: Vec<Var>,
}

/// Full horizon battery block.
pub fn bess_constraints(
    model: &mut Model,
    unit: &BessUnit,
    deficit: &[f64],
    dt: f64,
) -> Result<BessBlock, DerError> {
    if deficit.is_empty() {
        return Err(DerError::EmptyHorizon);
    }
    unit.validate()?;
    let steps: Vec<_> = deficit
        .iter()
        .enumerate()
        .map(|(t, &d)| add_bess_step(model, unit, &format!("{},{t}", unit.name), d, None))
        .collect();
    let energy = add_bess_dynamics(model, unit, &unit.name, &steps, dt);
    Ok(BessBlock { steps, energy })
}

/// Shift variable `n ∈ {−1, 0, 1}` (or pinned) for one step.
pub fn add_cl_step(model: &mut Model, tag: &str, fixed: Option<i32>) -> Var {
    let (lo, hi) = fixed.map_or((-1.0, 1.0), |n| (f64::from(n), f64::from(n)));
    model.add_integer(format!("n[{tag}]"), lo, hi)
}

/// Full horizon controllable load block; returns the shift variables.
/// `baseline` is `P_l(t)` in per-unit.
pub fn cl_constraints(model: &mut Model, load: &ControllableLoad, baseline: &[f64]) -> Result<Vec<Var>, DerError> {
    if baseline.is_empty() {
        return Err(DerError::EmptyHorizon);
    }
    check_shift(load, baseline)?;
    let n: Vec<Var> =
        (0..baseline.len()).map(|t| add_cl_step(model, &format!("{},{t}", load.name), None)).collect();
    let sum = n.iter().fold(LinExpr::new(), |acc, &v| acc + LinExpr::from(v));
    model.add_eq(format!("cl_neutral[{}]", load.name), sum, LinExpr::new());
    Ok(n)
}

/// `n = −1` must not produce negative demand.
pub fn check_shift(load: &ControllableLoad, baseline: &[f64]) -> Result<(), DerError> {
    if let Some((step, &min)) = baseline.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
        if load.p_shift > min + 1e-12 {
            return Err(DerError::ShiftTooLarge { unit: load.name.clone(), shift: load.p_shift, min, step });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(mode: CapabilityMode, cos: f64) -> DgUnit {
        DgUnit {
            name: "pv".into(),
            bus: 1,
            kind: DgKind::Pv,
            p_rating: 1.0,
            s_inv: 1.1,
            mode,
            cos_phi_max: cos,
            profile: "pv".into(),
            p_min_profile: None,
        }
    }

    #[test]
    fn triangular_at_zero_power_is_a_point() {
        let s = capability_bounds(&unit(CapabilityMode::Triangular, 0.9), 0.0).unwrap();
        assert_eq!(s, ReactiveSet::Interval { lo: 0.0, hi: 0.0 });
    }

    #[test]
    fn triangular_cos_09() {
        let s = capability_bounds(&unit(CapabilityMode::Triangular, 0.9), 1.0).unwrap();
        assert!((s.q_max() - 0.48432).abs() < 1e-5);
    }

    #[test]
    fn semicircle_at_rating() {
        let s = capability_bounds(&unit(CapabilityMode::Semicircle, 0.9), 1.0).unwrap();
        assert!((s.q_max() - 0.45826).abs() < 1e-5);
        assert!(s.contains(-0.45, 0.0) && !s.contains(0.46, 0.0));
    }

    #[test]
    fn rectangular_is_time_invariant() {
        let u = unit(CapabilityMode::Rectangular, 0.9);
        assert_eq!(capability_bounds(&u, 0.0).unwrap(), capability_bounds(&u, 0.8).unwrap());
    }

    #[test]
    fn power_above_inverter_rating_rejected() {
        assert!(capability_bounds(&unit(CapabilityMode::Semicircle, 0.9), 1.2).is_err());
    }

    #[test]
    fn bess_step_arithmetic() {
        assert_eq!(bess_step(50.0, 0.0, 0.0, 0.95, 0.25), 50.0);
        assert!((bess_step(0.0, 100.0, 0.0, 0.95, 0.25) - 23.75).abs() < 1e-12);
        assert!((bess_step(0.0, 0.0, 95.0, 0.95, 0.25) + 25.0).abs() < 1e-12);
    }

    #[test]
    fn fleet_units_convert_to_per_unit() {
        let text = r#"{
            "dg": [{"name": "pv4", "bus": 4, "kind": "pv", "rating_mva": 1.0, "capability": "tri", "profile": "pv"}],
            "bess": [{"name": "b5", "bus": 5, "capacity_kwh": 200, "soc_min": 0.1, "soc_max": 0.9,
                      "e_start_kwh": 100, "p_max_kw": 100, "s_max_kva": 110, "efficiency": 0.95}],
            "controllable_loads": [{"name": "cl", "bus": 34, "p_kw": 10, "profile": "res", "shift_kw": 5}]
        }"#;
        let f = Fleet::from_json_str(text, 1.0).unwrap();
        assert!((f.dg[0].s_inv - 1.1).abs() < 1e-12);
        assert!((f.bess[0].e_cap - 0.2).abs() < 1e-12);
        assert_eq!(f.bess[0].mode, Complementarity::Epsilon);
        assert!((f.loads[0].p_shift - 0.005).abs() < 1e-15);
    }

    #[test]
    fn bad_bess_rejected() {
        let text = r#"{"bess": [{"name": "b", "bus": 5, "capacity_kwh": 200, "soc_min": 0.5, "soc_max": 0.4,
                      "e_start_kwh": 100, "p_max_kw": 100, "s_max_kva": 110, "efficiency": 0.95}]}"#;
        assert!(matches!(Fleet::from_json_str(text, 1.0), Err(DerError::InvalidUnit { .. })));
    }

    #[test]
    fn shift_larger_than_baseline_rejected() {
        let l = ControllableLoad { name: "cl".into(), bus: 3, p_peak: 1.0, profile: "x".into(), p_shift: 0.5 };
        let mut m = Model::new();
        assert!(matches!(cl_constraints(&mut m, &l, &[1.0, 0.4, 1.0]), Err(DerError::ShiftTooLarge { step: 1, .. })));
        assert!(cl_constraints(&mut m, &l, &[1.0, 0.5]).is_ok());
    }

    #[test]
    fn cl_neutrality_row() {
        let l = ControllableLoad { name: "cl".into(), bus: 3, p_peak: 1.0, profile: "x".into(), p_shift: 0.1 };
        let mut m = Model::new();
        let n = cl_constraints(&mut m, &l, &[1.0; 4]).unwrap();
        let mut x = vec![0.0; m.num_vars()];
        x[n[0].0] = -1.0;
        x[n[3].0] = 1.0;
        assert!(m.violations(&x, 1e-12).is_empty());
        x[n[3].0] = 0.0;
        assert_eq!(m.violations(&x, 1e-12).len(), 1);
    }

    #[test]
    fn epsilon_rule_blocks_charging_at_deficit() {
        let b = BessUnit {
            name: "b".into(),
            bus: 1,
            e_cap: 0.2,
            soc_min: 0.1,
            soc_max: 0.9,
            e_start: 0.1,
            p_max: 0.1,
            s_max: 0.11,
            eta: 0.95,
            mode: Complementarity::Epsilon,
        };
        let mut m = Model::new();
        let s = add_bess_step(&mut m, &b, "t", 0.5, None);
        let mut x = vec![0.0; m.num_vars()];
        x[s.p_ch.0] = 1e-5 / 0.5;
        assert!(m.violations(&x, 1e-12).is_empty());
        x[s.p_ch.0] = 1e-3;
        assert!(!m.violations(&x, 1e-9).is_empty());
        x[s.p_ch.0] = 0.0;
        x[s.p_dis.0] = 0.1;
        assert!(m.violations(&x, 1e-12).is_empty());
    }
}
