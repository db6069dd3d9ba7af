//! Assembly of the multi-period OPF around a fixed linearization state.
//!
//! Each step carries explicit voltage and branch-current variables linked by
//! one backward/forward sweep: branch currents accumulate the linearized
//! injection currents `conj(S)/conj(V̄)` of the subtree, and voltages drop
//! along the path from the source, with the OLTC as a series source on its
//! branch.

use super::bnb::BnbOptions;
use super::OpfError;
use crate::der::{
    add_bess_dynamics, add_bess_step, add_cl_step, add_dg_step, check_shift, BessStepVars, DgVars, Fleet,
};
use crate::model::{LinExpr, Model, Var};
use crate::network::{BranchKind, NetworkModel, SourceCondition};
use crate::vsupport::{
    active_constraint_block, passive_constraint_block, passive_qlim, ActiveBlock, PassiveBlock, TariffSchedule,
};
use chrono::NaiveDateTime;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::str::FromStr;

/// Which voltage-support scheme the optimizer is aware of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VsMode {
    #[default]
    None,
    Passive,
    Active,
}

impl VsMode {
    pub const ALL: [VsMode; 3] = [VsMode::None, VsMode::Passive, VsMode::Active];

    pub fn as_str(self) -> &'static str {
        match self {
            VsMode::None => "none",
            VsMode::Passive => "passive",
            VsMode::Active => "active",
        }
    }
}

impl FromStr for VsMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(VsMode::None),
            "passive" => Ok(VsMode::Passive),
            "active" => Ok(VsMode::Active),
            _ => Err(format!("unknown voltage-support mode '{s}' (expected none, passive or active)")),
        }
    }
}

/// Operating cost rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostCoefficients {
    /// CHF/kWh of curtailed energy.
    pub c_curt: f64,
    /// CHF/kvarh of generator reactive energy.
    pub c_q: f64,
    /// CHF per pu of the largest voltage or thermal violation.
    pub c_h: f64,
    /// CHF/kWh of network losses.
    pub c_loss: f64,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        Self { c_curt: 0.3, c_q: 0.003, c_h: 1e6, c_loss: 0.3 }
    }
}

impl CostCoefficients {
    pub fn validate(&self) -> Result<(), OpfError> {
        let all = [self.c_curt, self.c_q, self.c_h, self.c_loss];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(OpfError::Input("cost coefficients must be finite and non-negative".into()));
        }
        if self.c_q >= self.c_curt {
            return Err(OpfError::Input(format!(
                "reactive cost {} must be below the curtailment cost {}",
                self.c_q, self.c_curt
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OpfOptions {
    pub v_min: f64,
    pub v_max: f64,
    pub big_m: f64,
    /// Search limits of the full-horizon problem.
    pub bnb: BnbOptions,
    /// Node limit of each single-step subproblem in the decomposition.
    pub period_node_limit: usize,
    pub max_outer: usize,
    /// Outer-loop voltage mismatch threshold (pu).
    pub tol: f64,
    /// Ex-post violations up to this size (pu) are linearization residue and
    /// carry no penalty.
    pub violation_tol: f64,
}

impl Default for OpfOptions {
    fn default() -> Self {
        Self {
            v_min: 0.95,
            v_max: 1.05,
            big_m: 100.0,
            bnb: BnbOptions { node_limit: 4, ..BnbOptions::default() },
            period_node_limit: 200,
            max_outer: 10,
            tol: 1e-4,
            violation_tol: 1e-3,
        }
    }
}

/// Exogenous time series of one horizon, all powers in pu (positive loads
/// consume).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonInputs {
    /// Step length in hours.
    pub dt: f64,
    pub timestamps: Vec<NaiveDateTime>,
    /// `[t][bus]` uncontrollable demand.
    pub load_p: Vec<Vec<f64>>,
    pub load_q: Vec<Vec<f64>>,
    /// `[t][unit]` available generator power.
    pub dg_avail: Vec<Vec<f64>>,
    /// `[t][unit]` minimum generator power.
    pub dg_floor: Vec<Vec<f64>>,
    /// `[t][load]` baseline of each controllable load.
    pub cl_baseline: Vec<Vec<f64>>,
    pub source: Vec<SourceCondition>,
    /// Transmission voltage setpoint per step (pu).
    pub v_set: Vec<f64>,
}

impl HorizonInputs {
    pub fn steps(&self) -> usize {
        self.timestamps.len()
    }

    pub fn validate(&self, network: &NetworkModel, fleet: &Fleet) -> Result<(), OpfError> {
        let n = self.steps();
        if n == 0 {
            return Err(OpfError::Input("empty horizon".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(OpfError::Input(format!("invalid step length {}", self.dt)));
        }
        let check = |name: &str, rows: &[Vec<f64>], width: usize| -> Result<(), OpfError> {
            if rows.len() != n {
                return Err(OpfError::Input(format!("{name}: {} steps, horizon has {n}", rows.len())));
            }
            if let Some(t) = rows.iter().position(|r| r.len() != width) {
                return Err(OpfError::Input(format!("{name}: step {t} has {} entries, expected {width}", rows[t].len())));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(OpfError::Input(format!("{name}: non-finite value")));
            }
            Ok(())
        };
        check("load_p", &self.load_p, network.n_buses())?;
        check("load_q", &self.load_q, network.n_buses())?;
        check("dg_avail", &self.dg_avail, fleet.dg.len())?;
        check("dg_floor", &self.dg_floor, fleet.dg.len())?;
        check("cl_baseline", &self.cl_baseline, fleet.loads.len())?;
        if self.source.len() != n || self.v_set.len() != n {
            return Err(OpfError::Input("source and setpoint schedules must cover the horizon".into()));
        }
        for (k, load) in fleet.loads.iter().enumerate() {
            let base: Vec<f64> = self.cl_baseline.iter().map(|r| r[k]).collect();
            check_shift(load, &base)?;
        }
        Ok(())
    }

    /// Local `P_l − P_g^max` at `bus` for step `t`.
    pub fn local_deficit(&self, network: &NetworkModel, fleet: &Fleet, bus: usize, t: usize) -> f64 {
        let gen: f64 = fleet
            .dg
            .iter()
            .enumerate()
            .filter(|(_, u)| network.bus_index(u.bus) == Some(bus))
            .map(|(k, u)| self.dg_avail[t][k].min(u.s_inv).max(0.0))
            .sum();
        let cl: f64 = fleet
            .loads
            .iter()
            .enumerate()
            .filter(|(_, l)| network.bus_index(l.bus) == Some(bus))
            .map(|(k, _)| self.cl_baseline[t][k])
            .sum();
        self.load_p[t][bus] + cl - gen
    }
}

/// Operating point the power-flow equations are linearized around.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    /// `[t][bus]` voltages V̄.
    pub v: Vec<Vec<Complex64>>,
    /// `[t]` active energy exchange (MWh per settlement window) used for the
    /// passive cost-free band.
    pub e_p_ref: Vec<f64>,
}

/// Everything a problem is built from.
#[derive(Clone, Copy)]
pub struct OpfContext<'a> {
    pub network: &'a NetworkModel,
    pub fleet: &'a Fleet,
    pub inputs: &'a HorizonInputs,
    pub coeffs: &'a CostCoefficients,
    pub tariff: &'a TariffSchedule,
    pub vs_mode: VsMode,
    pub options: &'a OpfOptions,
}

impl OpfContext<'_> {
    pub fn validate(&self) -> Result<(), OpfError> {
        self.coeffs.validate()?;
        self.fleet.check_buses(self.network)?;
        self.inputs.validate(self.network, self.fleet)?;
        let o = self.options;
        if !(o.v_min > 0.0 && o.v_min < o.v_max) || !(o.big_m > 0.0) {
            return Err(OpfError::Input("need 0 < V_min < V_max and M > 0".into()));
        }
        Ok(())
    }

    /// Energy per pu power over one step, in kWh.
    pub fn kwh_per_pu(&self) -> f64 {
        1000.0 * self.network.base_mva * self.inputs.dt
    }

    /// Settlement window in hours.
    pub fn window_h(&self) -> f64 {
        self.tariff.passive.window_h
    }

    /// Weight of one settlement-window charge in a step.
    pub fn vs_weight(&self) -> f64 {
        self.inputs.dt / self.window_h()
    }

    /// Available generator power after the inverter limit.
    pub fn dg_avail(&self, t: usize, k: usize) -> f64 {
        self.inputs.dg_avail[t][k].min(self.fleet.dg[k].s_inv).max(0.0)
    }

    pub fn dg_floor(&self, t: usize, k: usize) -> f64 {
        self.inputs.dg_floor[t][k].clamp(0.0, self.dg_avail(t, k))
    }
}

/// Pinned values of the inter-temporal decisions, `[unit][t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fixings {
    pub bess: Vec<Vec<(f64, f64)>>,
    pub cl: Vec<Vec<i32>>,
}

/// Cost expressions of one step (CHF).
#[derive(Clone, Debug, Default)]
pub struct StepCost {
    pub curtailment: LinExpr,
    pub reactive: LinExpr,
    pub vs_passive: LinExpr,
    pub vs_active: LinExpr,
    /// Weighted squares whose sum is the loss cost.
    pub losses: Vec<(f64, LinExpr)>,
}

impl StepCost {
    pub fn losses_value(&self, x: &[f64]) -> f64 {
        self.losses.iter().map(|(w, e)| w * e.eval(x).powi(2)).sum()
    }
}

/// Variables and derived expressions of one step.
#[derive(Clone, Debug)]
pub struct StepVars {
    pub t: usize,
    /// `(Re V, Im V)` per bus; the source bus is constant.
    pub v: Vec<(LinExpr, LinExpr)>,
    /// `(Re I, Im I)` per branch, oriented away from the source.
    pub i: Vec<(Var, Var)>,
    pub dg: Vec<DgVars>,
    pub bess: Vec<BessStepVars>,
    pub cl: Vec<Var>,
    pub tap: Option<Var>,
    pub passive: Option<PassiveBlock>,
    pub active: Option<ActiveBlock>,
    /// Exchange through the measurement bus, export positive (pu).
    pub p_exp: LinExpr,
    pub q_exp: LinExpr,
    /// Reactive energy per settlement window (Mvarh).
    pub e_q: LinExpr,
    pub v_m: LinExpr,
    pub e_qlim: f64,
    pub cost: StepCost,
}

#[derive(Clone, Debug)]
pub struct OpfProblem {
    pub model: Model,
    pub steps: Vec<StepVars>,
    /// `[unit][t]` stored energy after each step (full-horizon problems).
    pub energy: Vec<Vec<Var>>,
    pub s_v: Var,
    pub s_i: Var,
    pub penalty: LinExpr,
    pub vs_mode: VsMode,
}

impl OpfProblem {
    /// Range of steps covered.
    pub fn span(&self) -> Range<usize> {
        let first = self.steps.first().map_or(0, |s| s.t);
        first..first + self.steps.len()
    }
}

/// Full-horizon problem.
pub fn build_problem(ctx: &OpfContext, lin: &Linearization) -> Result<OpfProblem, OpfError> {
    ctx.validate()?;
    build_scoped(ctx, lin, 0..ctx.inputs.steps(), None)
}

/// Single-step problem with battery power and load shifts pinned.
pub fn build_period(ctx: &OpfContext, lin: &Linearization, t: usize, fix: &Fixings) -> Result<OpfProblem, OpfError> {
    build_scoped(ctx, lin, t..t + 1, Some(fix))
}

fn check_linearization(ctx: &OpfContext, lin: &Linearization) -> Result<(), OpfError> {
    let n = ctx.inputs.steps();
    if lin.v.len() != n || lin.e_p_ref.len() != n {
        return Err(OpfError::Input("linearization state does not cover the horizon".into()));
    }
    for (t, row) in lin.v.iter().enumerate() {
        if row.len() != ctx.network.n_buses() {
            return Err(OpfError::Input(format!("linearization step {t} has {} buses", row.len())));
        }
        if row.iter().skip(1).any(|v| !(v.norm() > 1e-6) || !v.re.is_finite() || !v.im.is_finite()) {
            return Err(OpfError::Input(format!("linearization voltage at step {t} is zero or non-finite")));
        }
    }
    Ok(())
}

fn build_scoped(
    ctx: &OpfContext,
    lin: &Linearization,
    span: Range<usize>,
    fix: Option<&Fixings>,
) -> Result<OpfProblem, OpfError> {
    check_linearization(ctx, lin)?;
    let net = ctx.network;
    let fleet = ctx.fleet;
    let inputs = ctx.inputs;
    let opts = ctx.options;
    let order = net.radial_order();
    let children = order.children();
    let n_bus = net.n_buses();
    let m_bus = net.measurement_bus();
    let kwh = ctx.kwh_per_pu();
    let weight = ctx.vs_weight();
    let e_scale = net.base_mva * ctx.window_h();

    let mut model = Model::new();
    let s_v = model.add_var("s_v", 0.0, 10.0);
    let s_i = model.add_var("s_i", 0.0, 100.0);
    let dg_bus: Vec<usize> = fleet.dg.iter().map(|u| net.bus_index(u.bus).expect("checked")).collect();
    let bess_bus: Vec<usize> = fleet.bess.iter().map(|u| net.bus_index(u.bus).expect("checked")).collect();
    let cl_bus: Vec<usize> = fleet.loads.iter().map(|u| net.bus_index(u.bus).expect("checked")).collect();
    let (tap_min, tap_max) = net.tap_range();
    let tap_branch = net.transformer().map(|t| t.branch);

    let mut steps = Vec::with_capacity(span.len());
    for t in span.clone() {
        let tag = |s: &str| format!("{s},{t}");
        let source = inputs.source[t];
        let z = net.branch_impedances(&source);

        let dg: Vec<DgVars> = fleet
            .dg
            .iter()
            .enumerate()
            .map(|(k, u)| add_dg_step(&mut model, u, &tag(&u.name), ctx.dg_floor(t, k), ctx.dg_avail(t, k)))
            .collect();
        let bess: Vec<BessStepVars> = fleet
            .bess
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let deficit = inputs.local_deficit(net, fleet, bess_bus[k], t);
                let pinned = fix.map(|f| f.bess[k][t]);
                add_bess_step(&mut model, u, &tag(&u.name), deficit, pinned)
            })
            .collect();
        let cl: Vec<Var> = fleet
            .loads
            .iter()
            .enumerate()
            .map(|(k, l)| add_cl_step(&mut model, &tag(&l.name), fix.map(|f| f.cl[k][t])))
            .collect();
        let tap = tap_branch.map(|_| model.add_integer(format!("tap[{t}]"), f64::from(tap_min), f64::from(tap_max)));

        // Net injections per bus.
        let mut p_inj: Vec<LinExpr> = (0..n_bus).map(|j| LinExpr::constant(-inputs.load_p[t][j])).collect();
        let mut q_inj: Vec<LinExpr> = (0..n_bus).map(|j| LinExpr::constant(-inputs.load_q[t][j])).collect();
        for (k, d) in dg.iter().enumerate() {
            p_inj[dg_bus[k]].add_term(d.p, 1.0);
            q_inj[dg_bus[k]].add_term(d.q, 1.0);
        }
        for (k, b) in bess.iter().enumerate() {
            p_inj[bess_bus[k]].add_term(b.p_dis, 1.0);
            p_inj[bess_bus[k]].add_term(b.p_ch, -1.0);
            q_inj[bess_bus[k]].add_term(b.q, 1.0);
        }
        for (k, &n) in cl.iter().enumerate() {
            let l = &fleet.loads[k];
            p_inj[cl_bus[k]].constant -= inputs.cl_baseline[t][k];
            p_inj[cl_bus[k]].add_term(n, -l.p_shift);
        }

        // Branch currents from the subtree balance.
        let i: Vec<(Var, Var)> = (0..net.n_branches())
            .map(|b| {
                (
                    model.add_var(format!("ire[{b},{t}]"), -100.0, 100.0),
                    model.add_var(format!("iim[{b},{t}]"), -100.0, 100.0),
                )
            })
            .collect();
        for b in 0..net.n_branches() {
            let (_, c) = order.oriented[b];
            let w = lin.v[t][c].inv().conj();
            let (a, bb) = (w.re, w.im);
            // I_inj = (aP + bQ) + j(bP − aQ); I_b = −I_inj(c) + Σ children
            let mut re = p_inj[c].scaled(-a) + q_inj[c].scaled(-bb);
            let mut im = p_inj[c].scaled(-bb) + q_inj[c].scaled(a);
            for &ch in &children[c] {
                re.add_term(i[ch].0, 1.0);
                im.add_term(i[ch].1, 1.0);
            }
            model.add_eq(format!("kcl_re[{b},{t}]"), i[b].0.into(), re);
            model.add_eq(format!("kcl_im[{b},{t}]"), i[b].1.into(), im);
        }

        // Voltages from the forward sweep.
        let mut v: Vec<(LinExpr, LinExpr)> = vec![(LinExpr::new(), LinExpr::new()); n_bus];
        v[0] = (LinExpr::constant(source.v_source.re), LinExpr::constant(source.v_source.im));
        for &b in &order.branch_order {
            let (p, c) = order.oriented[b];
            let vre = model.add_var(format!("vre[{c},{t}]"), 0.0, 2.0);
            let vim = model.add_var(format!("vim[{c},{t}]"), -1.0, 1.0);
            let (r, x) = (z[b].re, z[b].im);
            let (ire, iim) = i[b];
            let mut re = v[p].0.clone() - LinExpr::term(ire, r) + LinExpr::term(iim, x);
            let im = v[p].1.clone() - LinExpr::term(ire, x) - LinExpr::term(iim, r);
            if Some(b) == tap_branch {
                re.add_term(tap.expect("transformer has a tap"), -net.tap_step());
            }
            model.add_eq(format!("kvl_re[{c},{t}]"), vre.into(), re);
            model.add_eq(format!("kvl_im[{c},{t}]"), vim.into(), im);
            v[c] = (vre.into(), vim.into());
        }

        // Security limits.
        for (b, br) in net.branches().iter().enumerate() {
            if let (Some(imax), false) = (br.i_max, br.kind == BranchKind::Thevenin) {
                model.add_cone(
                    format!("thermal[{b},{t}]"),
                    LinExpr::constant(imax) + LinExpr::var(s_i),
                    vec![i[b].0.into(), i[b].1.into()],
                );
            }
        }
        for j in 1..n_bus {
            if !net.is_distribution_bus(j) {
                continue;
            }
            model.add_cone(
                format!("vmax[{j},{t}]"),
                LinExpr::constant(opts.v_max) + LinExpr::var(s_v),
                vec![v[j].0.clone(), v[j].1.clone()],
            );
            model.add_ge(format!("vmin[{j},{t}]"), v[j].0.clone(), LinExpr::constant(opts.v_min) - LinExpr::var(s_v));
        }

        // Exchange through the measurement bus, linearized at V̄_m.
        let vm_ref = if m_bus == 0 { source.v_source } else { lin.v[t][m_bus] };
        let (mut sum_re, mut sum_im) = (LinExpr::new(), LinExpr::new());
        for &b in &children[m_bus] {
            sum_re.add_term(i[b].0, 1.0);
            sum_im.add_term(i[b].1, 1.0);
        }
        let p_exp = -(sum_re.scaled(vm_ref.re) + sum_im.scaled(vm_ref.im));
        let q_exp = -(sum_re.scaled(vm_ref.im) - sum_im.scaled(vm_ref.re));
        let e_q = q_exp.scaled(e_scale);
        let v_m = if m_bus == 0 { LinExpr::constant(source.v_source.norm()) } else { v[m_bus].0.clone() };
        let e_qlim = passive_qlim(lin.e_p_ref[t], &ctx.tariff.passive);

        let mut cost = StepCost::default();
        for (k, d) in dg.iter().enumerate() {
            cost.curtailment.add_scaled(&(LinExpr::constant(ctx.dg_avail(t, k)) - LinExpr::var(d.p)), ctx.coeffs.c_curt * kwh);
            cost.reactive.add_term(d.q_abs, ctx.coeffs.c_q * kwh);
        }
        for (b, br) in net.branches().iter().enumerate() {
            if br.kind == BranchKind::Thevenin || z[b].re == 0.0 {
                continue;
            }
            let w = ctx.coeffs.c_loss * kwh * z[b].re;
            cost.losses.push((w, i[b].0.into()));
            cost.losses.push((w, i[b].1.into()));
        }
        let mut passive = None;
        let mut active = None;
        match ctx.vs_mode {
            VsMode::None => {}
            VsMode::Passive => {
                let blk = passive_constraint_block(&mut model, &t.to_string(), &e_q, e_qlim, ctx.tariff.passive.c_p, opts.big_m);
                cost.vs_passive = blk.cost.scaled(weight);
                passive = Some(blk);
            }
            VsMode::Active => {
                let blk = active_constraint_block(
                    &mut model,
                    &t.to_string(),
                    &e_q,
                    &v_m,
                    inputs.v_set[t],
                    &ctx.tariff.active,
                    opts.big_m,
                );
                cost.vs_active = blk.cost.scaled(weight);
                active = Some(blk);
            }
        }
        model.add_objective(&cost.curtailment);
        model.add_objective(&cost.reactive);
        model.add_objective(&cost.vs_passive);
        model.add_objective(&cost.vs_active);
        for (w, e) in &cost.losses {
            model.add_square(*w, e.clone());
        }
        steps.push(StepVars {
            t,
            v,
            i,
            dg,
            bess,
            cl,
            tap,
            passive,
            active,
            p_exp,
            q_exp,
            e_q,
            v_m,
            e_qlim,
            cost,
        });
    }

    // Inter-temporal coupling.
    let mut energy = Vec::new();
    if fix.is_none() {
        for (k, u) in fleet.bess.iter().enumerate() {
            let vars: Vec<BessStepVars> = steps.iter().map(|s| s.bess[k]).collect();
            energy.push(add_bess_dynamics(&mut model, u, &u.name, &vars, inputs.dt));
        }
        for (k, l) in fleet.loads.iter().enumerate() {
            let sum = steps.iter().fold(LinExpr::new(), |acc, s| acc + LinExpr::from(s.cl[k]));
            model.add_eq(format!("cl_neutral[{}]", l.name), sum, LinExpr::new());
        }
    }
    let penalty = (LinExpr::var(s_v) + LinExpr::var(s_i)).scaled(ctx.coeffs.c_h);
    model.add_objective(&penalty);
    Ok(OpfProblem { model, steps, energy, s_v, s_i, penalty, vs_mode: ctx.vs_mode })
}
