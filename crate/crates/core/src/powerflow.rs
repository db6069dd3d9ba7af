//! Backward/forward sweep power flow for radial networks.
//!
//! Injections follow the generator convention (positive = into the grid) and
//! are constant-power. The OLTC acts as a series source `−ΔV_tap·ρ` on the
//! transformer branch.

use crate::network::{NetworkModel, SourceCondition};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
const MIN_VOLTAGE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PowerFlowError {
    #[error("power flow did not converge in {iterations} sweeps (last max |ΔV| = {mismatch:.3e} pu)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("voltage at bus {0} collapsed towards zero")]
    VoltageCollapse(u32),
    #[error("tap {tap} outside [{min}, {max}]")]
    TapOutOfRange { tap: i32, min: i32, max: i32 },
    #[error("injection vector has {got} entries, network has {expected} buses")]
    LengthMismatch { expected: usize, got: usize },
    #[error("injection at bus {0} is not finite")]
    NonFinite(u32),
}

/// Per-bus net injections in per-unit, indexed like `NetworkModel::buses`.
/// The slack entry is ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionSet {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl InjectionSet {
    pub fn zeros(n: usize) -> Self {
        Self { p: vec![0.0; n], q: vec![0.0; n] }
    }

    pub fn power(&self, bus: usize) -> Complex64 {
        Complex64::new(self.p[bus], self.q[bus])
    }
}

#[derive(Clone, Debug)]
pub struct PfOptions {
    pub tap: i32,
    pub tol: f64,
    pub max_iter: usize,
    pub source: SourceCondition,
    /// Initial voltages; flat start at the source voltage when `None`.
    pub warm_start: Option<Vec<Complex64>>,
}

impl PfOptions {
    pub fn new(model: &NetworkModel, tap: i32) -> Self {
        Self { tap, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, source: model.nominal_source(), warm_start: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub voltages: Vec<Complex64>,
    /// Branch currents oriented parent → child.
    pub branch_currents: Vec<Complex64>,
    pub branch_losses: Vec<f64>,
    /// Complex power delivered by the slack source.
    pub slack_power: Complex64,
    /// Complex power delivered by the OLTC series source.
    pub tap_source_power: Complex64,
    pub tap: i32,
    pub iterations: usize,
    pub source: SourceCondition,
}

/// One backward sweep followed by one forward sweep from the given voltages.
pub fn sweep_once(
    model: &NetworkModel,
    inj: &InjectionSet,
    tap: i32,
    z: &[Complex64],
    v_source: Complex64,
    v: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>), PowerFlowError> {
    let order = model.radial_order();
    let n = model.n_buses();
    let mut load_current = vec![Complex64::new(0.0, 0.0); n];
    for j in 1..n {
        if v[j].norm() < MIN_VOLTAGE {
            return Err(PowerFlowError::VoltageCollapse(model.buses()[j].id));
        }
        load_current[j] = -(inj.power(j) / v[j]).conj();
    }
    let branches = model.branches();
    let mut current = vec![Complex64::new(0.0, 0.0); branches.len()];
    let mut subtree = load_current;
    for &b in order.branch_order.iter().rev() {
        let (parent, child) = order.oriented[b];
        current[b] = subtree[child];
        let c = subtree[child];
        subtree[parent] += c;
    }
    let tap_branch = model.transformer().map(|t| t.branch);
    let dv_tap = model.tap_step() * f64::from(tap);
    let mut v_new = vec![Complex64::new(0.0, 0.0); n];
    v_new[0] = v_source;
    for &b in &order.branch_order {
        let (parent, child) = order.oriented[b];
        let mut vc = v_new[parent] - z[b] * current[b];
        if Some(b) == tap_branch {
            vc -= dv_tap;
        }
        v_new[child] = vc;
    }
    Ok((v_new, current))
}

pub fn solve_bfs(
    model: &NetworkModel,
    inj: &InjectionSet,
    tap: i32,
    tol: f64,
    max_iter: usize,
) -> Result<NetworkState, PowerFlowError> {
    let opts = PfOptions { tol, max_iter, ..PfOptions::new(model, tap) };
    solve_bfs_with(model, inj, &opts)
}

pub fn solve_bfs_with(model: &NetworkModel, inj: &InjectionSet, opts: &PfOptions) -> Result<NetworkState, PowerFlowError> {
    let n = model.n_buses();
    if inj.p.len() != n || inj.q.len() != n {
        return Err(PowerFlowError::LengthMismatch { expected: n, got: inj.p.len().min(inj.q.len()) });
    }
    if let Some(j) = (1..n).find(|&j| !inj.p[j].is_finite() || !inj.q[j].is_finite()) {
        return Err(PowerFlowError::NonFinite(model.buses()[j].id));
    }
    let (tmin, tmax) = model.tap_range();
    if opts.tap < tmin || opts.tap > tmax {
        return Err(PowerFlowError::TapOutOfRange { tap: opts.tap, min: tmin, max: tmax });
    }
    let z = model.branch_impedances(&opts.source);
    let v_source = opts.source.v_source;
    let mut v = match &opts.warm_start {
        Some(w) if w.len() == n => w.clone(),
        _ => vec![v_source; n],
    };
    let mut mismatch = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (v_new, _) = sweep_once(model, inj, opts.tap, &z, v_source, &v)?;
        mismatch = v_new.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        v = v_new;
        if !mismatch.is_finite() {
            break;
        }
        if mismatch < opts.tol {
            // Currents consistent with the final voltages.
            let (_, current) = sweep_once(model, inj, opts.tap, &z, v_source, &v)?;
            return Ok(finish(model, &z, v, current, opts, it));
        }
    }
    Err(PowerFlowError::NonConvergence { iterations: opts.max_iter, mismatch })
}

fn finish(
    model: &NetworkModel,
    z: &[Complex64],
    voltages: Vec<Complex64>,
    currents: Vec<Complex64>,
    opts: &PfOptions,
    iterations: usize,
) -> NetworkState {
    let order = model.radial_order();
    let branch_losses: Vec<f64> = currents.iter().zip(z).map(|(i, z)| i.norm_sqr() * z.re).collect();
    let root_current: Complex64 =
        order.branch_order.iter().filter(|&&b| order.oriented[b].0 == 0).map(|&b| currents[b]).sum();
    let slack_power = voltages[0] * root_current.conj();
    let tap_source_power = match model.transformer() {
        Some(t) => -(model.tap_step() * f64::from(opts.tap)) * currents[t.branch].conj(),
        None => Complex64::new(0.0, 0.0),
    };
    NetworkState {
        voltages,
        branch_currents: currents,
        branch_losses,
        slack_power,
        tap_source_power,
        tap: opts.tap,
        iterations,
        source: opts.source,
    }
}

/// `|I|²·R` per branch, with the Thévenin resistance of the state's source.
pub fn branch_loss(state: &NetworkState, model: &NetworkModel) -> Vec<f64> {
    let z = model.branch_impedances(&state.source);
    state.branch_currents.iter().zip(&z).map(|(i, z)| i.norm_sqr() * z.re).collect()
}

/// Voltage magnitude at the measurement bus.
pub fn interconnection_voltage(state: &NetworkState, model: &NetworkModel) -> f64 {
    state.voltages[model.measurement_bus()].norm()
}

/// Complex power exported from the distribution side through the
/// measurement bus (positive = towards the transmission grid).
pub fn interconnection_exchange(state: &NetworkState, model: &NetworkModel) -> Complex64 {
    let m = model.measurement_bus();
    let order = model.radial_order();
    let downstream: Complex64 = model
        .branches()
        .iter()
        .enumerate()
        .filter(|(b, _)| order.oriented[*b].0 == m)
        .map(|(b, _)| state.branch_currents[b])
        .sum();
    -(state.voltages[m] * downstream.conj())
}
