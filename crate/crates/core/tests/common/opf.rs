//! Small OPF instances built in code.

use chrono::{NaiveDate, NaiveDateTime};
use gridvolt::der::{capability_bounds, Fleet};
use gridvolt::network::{BusKind, BusSpec, NetworkFile, NetworkModel};
use gridvolt::opf::{CostCoefficients, HorizonInputs, OpfContext, OpfOptions, OpfSolution, VsMode};
use gridvolt::vsupport::{resolve_tariff, TariffSchedule};

use super::nr::newton_raphson;
use super::pu_branch;
use gridvolt::powerflow::InjectionSet;
use num_complex::Complex64;

/// Chain `0 → 1 → … → n−1` of identical lines, 1 MVA base.
pub fn chain(n: usize, r: f64, x: f64) -> NetworkModel {
    let mut buses = vec![BusSpec { id: 0, kind: BusKind::Slack, base_kv: 20.0, load: None }];
    let mut branches = Vec::new();
    for j in 1..n as u32 {
        buses.push(BusSpec { id: j, kind: BusKind::Mv, base_kv: 20.0, load: None });
        branches.push(pu_branch(format!("l{j}"), j - 1, j, r, x));
    }
    let file = NetworkFile {
        name: "chain".into(),
        base_mva: 1.0,
        buses,
        branches,
        transformer: None,
        thevenin: None,
        measurement_bus: None,
    };
    NetworkModel::from_file(&file).unwrap()
}

/// One generator at `bus` with the given capability and rating.
pub fn pv_fleet(bus: u32, rating: f64, capability: &str) -> Fleet {
    let text = format!(
        r#"{{"dg": [{{"name": "PV", "bus": {bus}, "kind": "pv", "rating_mva": {rating},
            "capability": "{capability}", "profile": "pv"}}]}}"#
    );
    Fleet::from_json_str(&text, 1.0).unwrap()
}

pub fn start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 7, 15).unwrap().and_hms_opt(12, 0, 0).unwrap()
}

/// Inputs with constant loads `load[bus] = (p, q)` and generator availability.
pub fn inputs(
    net: &NetworkModel,
    fleet: &Fleet,
    steps: usize,
    load: &[(f64, f64)],
    avail: &[Vec<f64>],
    v_set: f64,
) -> HorizonInputs {
    let ts = (0..steps).map(|t| start() + chrono::Duration::minutes(15 * t as i64)).collect();
    HorizonInputs {
        dt: 0.25,
        timestamps: ts,
        load_p: vec![load.iter().map(|l| l.0).collect(); steps],
        load_q: vec![load.iter().map(|l| l.1).collect(); steps],
        dg_avail: avail.to_vec(),
        dg_floor: vec![vec![0.0; fleet.dg.len()]; steps],
        cl_baseline: vec![fleet.loads.iter().map(|l| l.p_peak).collect(); steps],
        source: vec![net.nominal_source(); steps],
        v_set: vec![v_set; steps],
    }
}

pub struct Instance {
    pub network: NetworkModel,
    pub fleet: Fleet,
    pub inputs: HorizonInputs,
    pub coeffs: CostCoefficients,
    pub tariff: TariffSchedule,
    pub options: OpfOptions,
}

impl Instance {
    pub fn new(network: NetworkModel, fleet: Fleet, inputs: HorizonInputs) -> Self {
        Self {
            network,
            fleet,
            inputs,
            coeffs: CostCoefficients::default(),
            tariff: resolve_tariff("preset-2018").unwrap(),
            options: OpfOptions::default(),
        }
    }

    pub fn ctx(&self, vs_mode: VsMode) -> OpfContext<'_> {
        OpfContext {
            network: &self.network,
            fleet: &self.fleet,
            inputs: &self.inputs,
            coeffs: &self.coeffs,
            tariff: &self.tariff,
            vs_mode,
            options: &self.options,
        }
    }
}

pub const C_CURT: f64 = 0.3;
pub const C_Q: f64 = 0.003;
pub const C_LOSS: f64 = 0.3;
/// kWh per pu over a 15-minute step at 1 MVA.
pub const KWH: f64 = 250.0;
pub const TAN_PHI: f64 = 0.484_322_104_837_406_1;

/// Three-bus feeder whose generator pushes the far end above 1.05 pu at
/// full output and unity power factor.
pub fn three_bus(capability: &str) -> Instance {
    let net = chain(3, 0.04, 0.03);
    let fleet = pv_fleet(2, 1.0, capability);
    let load = [(0.0, 0.0), (0.1, 0.03), (0.05, 0.01)];
    let inp = inputs(&net, &fleet, 1, &load, &[vec![1.0]], 1.0);
    Instance::new(net, fleet, inp)
}

pub struct GridPoint {
    pub cost: f64,
    pub p: f64,
    pub q: f64,
}

/// Exhaustive search over (P, Q) at `step` pu with Newton-Raphson power
/// flows; keeps the cheapest point inside the voltage band.
pub fn grid_search(inst: &Instance, q_range: impl Fn(f64) -> (f64, f64), step: f64) -> GridPoint {
    let net = &inst.network;
    let load = (&inst.inputs.load_p[0], &inst.inputs.load_q[0]);
    let avail = inst.inputs.dg_avail[0][0];
    let z: Vec<Complex64> = net.branches().iter().map(|b| Complex64::new(b.r, b.x)).collect();
    let mut best = GridPoint { cost: f64::INFINITY, p: 0.0, q: 0.0 };
    let n_p = (avail / step).round() as i64;
    for ip in 0..=n_p {
        let p = ip as f64 * step;
        let (lo, hi) = q_range(p);
        let (q0, q1) = ((lo / step).ceil() as i64, (hi / step).floor() as i64);
        for iq in q0..=q1 {
            let q = iq as f64 * step;
            let curt = (avail - p) * C_CURT * KWH + q.abs() * C_Q * KWH;
            if curt >= best.cost {
                continue;
            }
            let mut inj = InjectionSet { p: load.0.iter().map(|v| -v).collect(), q: load.1.iter().map(|v| -v).collect() };
            inj.p[2] += p;
            inj.q[2] += q;
            let Some(nr) = newton_raphson(net, &inj, 0, 1e-10) else { continue };
            let v = &nr.voltages;
            if v[1..].iter().any(|u| u.norm() > inst.options.v_max || u.norm() < inst.options.v_min) {
                continue;
            }
            let loss: f64 = net
                .branches()
                .iter()
                .enumerate()
                .map(|(b, br)| ((v[br.from] - v[br.to]) / z[b]).norm_sqr() * br.r)
                .sum();
            let cost = curt + loss * C_LOSS * KWH;
            if cost < best.cost {
                best = GridPoint { cost, p, q };
            }
        }
    }
    best
}

pub const STEPS: usize = 4;

fn device_fleet(capability: &str, rating: f64) -> Fleet {
    let text = format!(
        r#"{{
        "dg": [{{"name": "PV", "bus": 3, "kind": "pv", "rating_mva": {rating}, "capability": "{capability}", "profile": "pv"}}],
        "bess": [{{"name": "B", "bus": 2, "capacity_kwh": 200, "soc_min": 0.1, "soc_max": 0.9, "e_start_kwh": 100,
                   "p_max_kw": 100, "s_max_kva": 120, "efficiency": 0.95}}],
        "controllable_loads": [{{"name": "CL", "bus": 1, "p_kw": 20, "profile": "flat", "shift_kw": 5}}]
        }}"#
    );
    Fleet::from_json_str(&text, 1.0).unwrap()
}

/// Four-bus feeder with a generator at the end, a battery and a shiftable
/// load, over [`STEPS`] steps.
pub fn device_instance(capability: &str, rating: f64, avail: &[f64], load: f64, r: f64) -> Instance {
    let net = chain(4, r, r * 0.8);
    let fleet = device_fleet(capability, rating);
    let loads = [(0.0, 0.0), (load, 0.3 * load), (load, 0.3 * load), (0.5 * load, 0.1 * load)];
    let avail: Vec<Vec<f64>> = avail.iter().map(|a| vec![a * rating]).collect();
    let inp = inputs(&net, &fleet, STEPS, &loads, &avail, 1.0);
    Instance::new(net, fleet, inp)
}

/// Device-limit violations of a solved [`device_instance`], empty when clean.
pub fn device_violations(inst: &Instance, sol: &OpfSolution) -> Vec<String> {
    let mut out = Vec::new();
    let unit = &inst.fleet.dg[0];
    let b = &inst.fleet.bess[0];
    let kwh = 1000.0 * inst.network.base_mva;
    for (t, d) in sol.dispatch.iter().enumerate() {
        let set = capability_bounds(unit, d.dg_p[0].clamp(0.0, unit.s_inv)).unwrap();
        if !set.contains(d.dg_q[0], 1e-9) {
            out.push(format!("step {t}: Q {} outside {set:?}", d.dg_q[0]));
        }
        if d.dg_p[0] > inst.inputs.dg_avail[t][0] + 1e-9 {
            out.push(format!("step {t}: P above availability"));
        }
        let e = d.bess_energy[0];
        if e < b.e_min() - 1e-6 / kwh || e > b.e_max() + 1e-6 / kwh {
            out.push(format!("step {t}: stored energy {e} outside the SoC window"));
        }
    }
    let last = sol.dispatch.last().unwrap().bess_energy[0];
    if (last - b.e_start).abs() * kwh > 1e-6 {
        out.push(format!("terminal energy off by {} kWh", (last - b.e_start) * kwh));
    }
    let shifts: i32 = sol.dispatch.iter().map(|d| d.cl_shift[0]).sum();
    if shifts != 0 {
        out.push(format!("load shifts sum to {shifts}"));
    }
    if !sol.big_m_binding.is_empty() {
        out.push(format!("big-M rows at bound: {:?}", sol.big_m_binding));
    }
    out
}
