//! Radial network data model.
//!
//! Buses are stored with the slack (source) bus at index 0. Every non-slack
//! bus has exactly one parent branch; branches are oriented parent → child
//! at load time and a root-first sweep order is cached.

mod io;
mod radial;
mod topology;

pub use io::{
    load_network, BranchSpec, BusSpec, ImpedanceUnit, LoadSpec, NetworkFile, SourceSpec, TheveninSpec, TransformerSpec,
};
pub use radial::{analyze_radial, RadialOrder};
pub use topology::{build_topology_matrices, TopologyMatrices};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

pub type BusId = u32;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("network has no slack bus")]
    MissingSlack,
    #[error("network has more than one slack bus ({0} and {1})")]
    MultipleSlack(BusId, BusId),
    #[error("branch {branch} references unknown bus {bus}")]
    UnknownBus { branch: String, bus: BusId },
    #[error("topology is not radial: branch {0} closes a cycle")]
    Cycle(String),
    #[error("bus {0} is not connected to the slack bus")]
    Disconnected(BusId),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("short-circuit capacity must be positive, got {0}")]
    NonPositiveScc(f64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed network description: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    /// Transmission-side interconnection bus (primary side of the OLTC).
    Hv,
    Mv,
    Lv,
}

/// Inelastic constant-power demand attached to a bus, scaled by a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusLoad {
    /// Peak active demand in per-unit of the system base.
    pub p: f64,
    /// Peak reactive demand in per-unit of the system base.
    pub q: f64,
    /// Profile column name; `None` means a constant load.
    pub profile: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    pub base_kv: f64,
    pub load: Option<BusLoad>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Line,
    Transformer,
    Thevenin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub name: String,
    /// Parent bus index (towards the slack).
    pub from: usize,
    /// Child bus index.
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Ampacity in per-unit; `None` for unlimited (Thévenin branch).
    pub i_max: Option<f64>,
    pub kind: BranchKind,
}

impl Branch {
    pub fn impedance(&self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }
}

/// On-load tap changer. Each tap step shifts the secondary-side voltage by
/// `-tap_step` per-unit: `V_secondary = V_primary + z·I − tap_step·ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct OltcTransformer {
    /// Index of the transformer branch.
    pub branch: usize,
    pub tap_step: f64,
    pub tap_min: i32,
    pub tap_max: i32,
    pub tap: i32,
    /// Nominal rating in per-unit of the system base.
    pub rating: f64,
    /// Short-circuit voltage in percent.
    pub uk_percent: f64,
}

impl OltcTransformer {
    pub fn contains_tap(&self, tap: i32) -> bool {
        (self.tap_min..=self.tap_max).contains(&tap)
    }
}

/// Upstream grid seen from the interconnection bus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceCondition {
    pub v_source: Complex64,
    pub z_th: Complex64,
}

impl Default for SourceCondition {
    fn default() -> Self {
        Self { v_source: Complex64::new(1.0, 0.0), z_th: Complex64::new(0.0, 0.0) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheveninEquivalent {
    /// Index of the Thévenin branch (slack → interconnection bus).
    pub branch: usize,
    pub nominal: SourceCondition,
    /// Optional hourly values, indexed by hour of day.
    pub hourly: Option<Vec<SourceCondition>>,
}

/// `|Z_th| = factor / scc` with the given X/R ratio. `scc` is in per-unit of
/// the system base.
pub fn thevenin_from_scc(scc: f64, factor: f64, x_over_r: f64) -> Result<Complex64, NetworkError> {
    if !(scc > 0.0) {
        return Err(NetworkError::NonPositiveScc(scc));
    }
    if !(factor >= 0.0) || !(x_over_r >= 0.0) {
        return Err(NetworkError::InvalidParameter(format!(
            "thevenin factor {factor} and X/R {x_over_r} must be nonnegative"
        )));
    }
    let magnitude = factor / scc;
    if scc.is_infinite() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let r = magnitude / (1.0 + x_over_r * x_over_r).sqrt();
    Ok(Complex64::new(r, r * x_over_r))
}

/// Validated radial network. Immutable once built.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    pub name: String,
    pub base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    transformer: Option<OltcTransformer>,
    thevenin: Option<TheveninEquivalent>,
    measurement_bus: usize,
    index: HashMap<BusId, usize>,
    order: RadialOrder,
    /// `true` for buses on the secondary side of the OLTC.
    tap_side: Vec<bool>,
}

impl NetworkModel {
    /// Builds and validates a model. `buses[0]` must be the slack bus and
    /// branch endpoints are bus indices (orientation is fixed here).
    pub(crate) fn new(
        name: String,
        base_mva: f64,
        buses: Vec<Bus>,
        mut branches: Vec<Branch>,
        transformer: Option<OltcTransformer>,
        thevenin: Option<TheveninEquivalent>,
        measurement_bus: usize,
    ) -> Result<Self, NetworkError> {
        if !(base_mva > 0.0) {
            return Err(NetworkError::InvalidParameter(format!("base_mva must be positive, got {base_mva}")));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return Err(NetworkError::DuplicateBus(b.id));
            }
            if !(b.base_kv > 0.0) {
                return Err(NetworkError::InvalidParameter(format!("bus {}: base_kv must be positive", b.id)));
            }
        }
        match buses.iter().filter(|b| b.kind == BusKind::Slack).map(|b| b.id).collect::<Vec<_>>()[..] {
            [] => return Err(NetworkError::MissingSlack),
            [_] => {}
            [a, b, ..] => return Err(NetworkError::MultipleSlack(a, b)),
        }
        if buses[0].kind != BusKind::Slack {
            return Err(NetworkError::InvalidParameter("slack bus must be stored first".into()));
        }
        for br in &branches {
            if !(br.r >= 0.0) || !br.x.is_finite() {
                return Err(NetworkError::InvalidParameter(format!("branch {}: R must be ≥ 0 and X finite", br.name)));
            }
            if let Some(i_max) = br.i_max {
                if !(i_max > 0.0) {
                    return Err(NetworkError::InvalidParameter(format!("branch {}: ampacity must be > 0", br.name)));
                }
            }
        }
        let edges: Vec<(usize, usize)> = branches.iter().map(|b| (b.from, b.to)).collect();
        let names: Vec<String> = branches.iter().map(|b| b.name.clone()).collect();
        let order = analyze_radial(buses.len(), 0, &edges, &names).map_err(|e| match e {
            NetworkError::Disconnected(i) => NetworkError::Disconnected(buses[i as usize].id),
            other => other,
        })?;
        for (k, br) in branches.iter_mut().enumerate() {
            let (parent, child) = order.oriented[k];
            br.from = parent;
            br.to = child;
        }
        if let Some(t) = &transformer {
            if !(t.tap_step > 0.0) || t.tap_min > t.tap_max || !t.contains_tap(t.tap) {
                return Err(NetworkError::InvalidParameter(format!(
                    "transformer taps: step {} must be > 0 and {} ≤ {} ≤ {}",
                    t.tap_step, t.tap_min, t.tap, t.tap_max
                )));
            }
        }
        if let Some(th) = &thevenin {
            let conditions = std::iter::once(&th.nominal).chain(th.hourly.iter().flatten());
            for c in conditions {
                if !(c.v_source.norm() > 0.0) || !(c.z_th.re >= 0.0) {
                    return Err(NetworkError::InvalidParameter(
                        "thevenin source voltage must be nonzero and resistance ≥ 0".into(),
                    ));
                }
            }
            if let Some(h) = &th.hourly {
                if h.len() != 24 {
                    return Err(NetworkError::InvalidParameter(format!(
                        "thevenin hourly schedule needs 24 entries, got {}",
                        h.len()
                    )));
                }
            }
        }
        if measurement_bus >= buses.len() {
            return Err(NetworkError::InvalidParameter("measurement bus out of range".into()));
        }
        let mut tap_side = vec![false; buses.len()];
        if let Some(t) = &transformer {
            let secondary = branches[t.branch].to;
            tap_side[secondary] = true;
            for &b in &order.branch_order {
                if tap_side[branches[b].from] {
                    tap_side[branches[b].to] = true;
                }
            }
        }
        Ok(Self { name, base_mva, buses, branches, transformer, thevenin, measurement_bus, index, order, tap_side })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn transformer(&self) -> Option<&OltcTransformer> {
        self.transformer.as_ref()
    }

    pub fn thevenin(&self) -> Option<&TheveninEquivalent> {
        self.thevenin.as_ref()
    }

    /// Index of the bus where `V_m` is measured.
    pub fn measurement_bus(&self) -> usize {
        self.measurement_bus
    }

    /// Cached root-first sweep order.
    pub fn radial_order(&self) -> &RadialOrder {
        &self.order
    }

    /// Re-runs the radial analysis on the stored topology.
    pub fn validate_radial(&self) -> Result<RadialOrder, NetworkError> {
        let edges: Vec<(usize, usize)> = self.branches.iter().map(|b| (b.from, b.to)).collect();
        let names: Vec<String> = self.branches.iter().map(|b| b.name.clone()).collect();
        analyze_radial(self.buses.len(), 0, &edges, &names)
    }

    /// Whether a bus sits on the secondary side of the OLTC.
    pub fn on_tap_side(&self, bus: usize) -> bool {
        self.tap_side[bus]
    }

    pub fn tap_step(&self) -> f64 {
        self.transformer.as_ref().map_or(0.0, |t| t.tap_step)
    }

    pub fn tap_range(&self) -> (i32, i32) {
        self.transformer.as_ref().map_or((0, 0), |t| (t.tap_min, t.tap_max))
    }

    /// Source condition for an hour of day (nominal if no schedule).
    pub fn source_at_hour(&self, hour: usize) -> SourceCondition {
        match &self.thevenin {
            None => SourceCondition::default(),
            Some(th) => match &th.hourly {
                Some(h) => h[hour % 24],
                None => th.nominal,
            },
        }
    }

    pub fn nominal_source(&self) -> SourceCondition {
        self.thevenin.as_ref().map_or_else(SourceCondition::default, |t| t.nominal)
    }

    /// Branch impedances with the Thévenin branch taken from `source`.
    pub fn branch_impedances(&self, source: &SourceCondition) -> Vec<Complex64> {
        let mut z: Vec<Complex64> = self.branches.iter().map(Branch::impedance).collect();
        if let Some(th) = &self.thevenin {
            z[th.branch] = source.z_th;
        }
        z
    }

    /// Whether voltage limits apply at a bus (distribution-side buses only).
    pub fn is_distribution_bus(&self, bus: usize) -> bool {
        matches!(self.buses[bus].kind, BusKind::Mv | BusKind::Lv)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn bus(id: BusId, kind: BusKind) -> Bus {
        Bus { id, kind, base_kv: 20.0, load: None }
    }

    pub(crate) fn line(name: &str, from: usize, to: usize, r: f64, x: f64) -> Branch {
        Branch { name: name.into(), from, to, r, x, i_max: Some(10.0), kind: BranchKind::Line }
    }

    /// Chain slack–1–2–…–n with identical impedances.
    pub(crate) fn chain(n: usize, z: Complex64) -> NetworkModel {
        let mut buses = vec![bus(0, BusKind::Slack)];
        let mut branches = Vec::new();
        for i in 1..=n {
            buses.push(bus(i as BusId, BusKind::Mv));
            branches.push(line(&format!("b{i}"), i - 1, i, z.re, z.im));
        }
        NetworkModel::new("chain".into(), 1.0, buses, branches, None, None, 0).unwrap()
    }

    #[test]
    fn scc_rule_gives_magnitude_factor_over_scc() {
        let z = thevenin_from_scc(10.0, 3.0, 10.0).unwrap();
        assert!((z.norm() - 0.3).abs() < 1e-12);
        assert!((z.im / z.re - 10.0).abs() < 1e-9);
        let z = thevenin_from_scc(1.0, 1.0, 10.0).unwrap();
        assert!((z.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stiff_grid_has_vanishing_impedance() {
        let z = thevenin_from_scc(1e12, 3.0, 10.0).unwrap();
        assert!(z.norm() < 1e-11);
        assert_eq!(thevenin_from_scc(f64::INFINITY, 3.0, 10.0).unwrap().norm(), 0.0);
    }

    #[test]
    fn nonpositive_scc_rejected() {
        assert!(matches!(thevenin_from_scc(0.0, 3.0, 10.0), Err(NetworkError::NonPositiveScc(_))));
        assert!(thevenin_from_scc(-1.0, 3.0, 10.0).is_err());
    }

    #[test]
    fn duplicate_and_missing_slack_rejected() {
        let buses = vec![bus(0, BusKind::Slack), bus(0, BusKind::Mv)];
        let r = NetworkModel::new("d".into(), 1.0, buses, vec![line("b", 0, 1, 0.1, 0.1)], None, None, 0);
        assert!(matches!(r, Err(NetworkError::DuplicateBus(0))));

        let buses = vec![bus(0, BusKind::Mv), bus(1, BusKind::Mv)];
        let r = NetworkModel::new("m".into(), 1.0, buses, vec![line("b", 0, 1, 0.1, 0.1)], None, None, 0);
        assert!(matches!(r, Err(NetworkError::MissingSlack)));
    }

    #[test]
    fn cross_tie_is_a_cycle() {
        let buses = vec![bus(0, BusKind::Slack), bus(1, BusKind::Mv), bus(2, BusKind::Mv)];
        let branches = vec![line("a", 0, 1, 0.1, 0.1), line("b", 0, 2, 0.1, 0.1), line("tie", 1, 2, 0.1, 0.1)];
        let r = NetworkModel::new("c".into(), 1.0, buses, branches, None, None, 0);
        assert!(matches!(r, Err(NetworkError::Cycle(ref n)) if n == "tie"));
    }

    #[test]
    fn tap_side_marks_secondary_subtree() {
        let buses = vec![bus(0, BusKind::Slack), bus(1, BusKind::Hv), bus(2, BusKind::Mv), bus(3, BusKind::Mv)];
        let branches = vec![line("th", 0, 1, 0.0, 0.01), line("tr", 1, 2, 0.0, 0.05), line("l", 2, 3, 0.01, 0.01)];
        let tr = OltcTransformer { branch: 1, tap_step: 0.01, tap_min: -2, tap_max: 2, tap: 0, rating: 25.0, uk_percent: 12.0 };
        let m = NetworkModel::new("t".into(), 1.0, buses, branches, Some(tr), None, 1).unwrap();
        assert_eq!((0..4).map(|b| m.on_tap_side(b)).collect::<Vec<_>>(), vec![false, false, true, true]);
    }

    #[test]
    fn invalid_tap_configuration_rejected() {
        let buses = vec![bus(0, BusKind::Slack), bus(1, BusKind::Mv)];
        let tr = OltcTransformer { branch: 0, tap_step: 0.01, tap_min: 0, tap_max: 2, tap: 3, rating: 1.0, uk_percent: 6.0 };
        let r = NetworkModel::new("t".into(), 1.0, buses, vec![line("tr", 0, 1, 0.0, 0.05)], Some(tr), None, 0);
        assert!(matches!(r, Err(NetworkError::InvalidParameter(_))));
    }
}
