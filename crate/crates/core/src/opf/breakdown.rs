//! Per-step, per-category cost tables.

use super::problem::{OpfContext, OpfProblem, VsMode};
use crate::network::BranchKind;
use crate::powerflow::NetworkState;
use crate::vsupport::{active_cost, active_region, metered, passive_cost, passive_qlim};
use chrono::NaiveDateTime;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Costs of one step in CHF. Negative VS values are revenue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub timestamp: NaiveDateTime,
    pub curtailment: f64,
    pub reactive: f64,
    pub losses: f64,
    pub vs_passive: f64,
    pub vs_active: f64,
    pub penalty: f64,
    /// Operational costs, penalty and the VS charge of the table's scheme.
    pub total: f64,
}

impl CostRow {
    pub fn operational(&self) -> f64 {
        self.curtailment + self.reactive + self.losses
    }

    fn finish(mut self, scheme: VsMode) -> Self {
        let vs = match scheme {
            VsMode::None => 0.0,
            VsMode::Passive => self.vs_passive,
            VsMode::Active => self.vs_active,
        };
        self.total = self.operational() + self.penalty + vs;
        self
    }
}

/// Column sums of a [`CostTable`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub curtailment: f64,
    pub reactive: f64,
    pub losses: f64,
    pub vs_passive: f64,
    pub vs_active: f64,
    pub penalty: f64,
    pub total: f64,
}

impl CostTotals {
    pub fn operational(&self) -> f64 {
        self.curtailment + self.reactive + self.losses
    }

    pub fn add(&mut self, other: &CostTotals) {
        self.curtailment += other.curtailment;
        self.reactive += other.reactive;
        self.losses += other.losses;
        self.vs_passive += other.vs_passive;
        self.vs_active += other.vs_active;
        self.penalty += other.penalty;
        self.total += other.total;
    }

    /// VS charge under `scheme`.
    pub fn vs(&self, scheme: VsMode) -> f64 {
        match scheme {
            VsMode::None => 0.0,
            VsMode::Passive => self.vs_passive,
            VsMode::Active => self.vs_active,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    /// VS scheme included in `total`.
    pub scheme: VsMode,
    pub rows: Vec<CostRow>,
}

impl CostTable {
    pub fn totals(&self) -> CostTotals {
        let mut s = CostTotals::default();
        for r in &self.rows {
            s.curtailment += r.curtailment;
            s.reactive += r.reactive;
            s.losses += r.losses;
            s.vs_passive += r.vs_passive;
            s.vs_active += r.vs_active;
            s.penalty += r.penalty;
            s.total += r.total;
        }
        s
    }
}

/// First index of the largest value (0 when empty).
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// Books the horizon-level penalty `c_h·(s_v + s_i)` on the steps where
/// each violation peaks.
fn book_penalty(rows: &mut [CostRow], c_h: f64, s_v: f64, s_i: f64, eta_v: &[f64], eta_i: &[f64]) {
    if rows.is_empty() {
        return;
    }
    rows[argmax(eta_v)].penalty += c_h * s_v;
    rows[argmax(eta_i)].penalty += c_h * s_i;
}

/// Largest voltage and thermal violations of one step. `linear_lower` uses
/// the `Re V ≥ V_min` form of the lower limit.
pub fn step_violations(ctx: &OpfContext, v: &[Complex64], i: &[Complex64], linear_lower: bool) -> (f64, f64) {
    let net = ctx.network;
    let o = ctx.options;
    let mut ev: f64 = 0.0;
    for (j, vj) in v.iter().enumerate().skip(1) {
        if net.is_distribution_bus(j) {
            let low = if linear_lower { vj.re } else { vj.norm() };
            ev = ev.max(vj.norm() - o.v_max).max(o.v_min - low);
        }
    }
    let mut ei: f64 = 0.0;
    for (b, br) in net.branches().iter().enumerate() {
        if let (Some(imax), false) = (br.i_max, br.kind == BranchKind::Thevenin) {
            ei = ei.max(i[b].norm() - imax);
        }
    }
    (ev, ei)
}

/// Term-by-term evaluation of the problem objective at `x`; the totals
/// reproduce `problem.model.objective_value(x)`.
pub fn objective_breakdown(ctx: &OpfContext, problem: &OpfProblem, x: &[f64]) -> CostTable {
    let mut rows = Vec::with_capacity(problem.steps.len());
    let mut eta_v = Vec::new();
    let mut eta_i = Vec::new();
    for s in &problem.steps {
        let v: Vec<Complex64> = s.v.iter().map(|(re, im)| Complex64::new(re.eval(x), im.eval(x))).collect();
        let i: Vec<Complex64> = s.i.iter().map(|(re, im)| Complex64::new(x[re.0], x[im.0])).collect();
        let (ev, ei) = step_violations(ctx, &v, &i, true);
        eta_v.push(ev);
        eta_i.push(ei);
        rows.push(CostRow {
            timestamp: ctx.inputs.timestamps[s.t],
            curtailment: s.cost.curtailment.eval(x),
            reactive: s.cost.reactive.eval(x),
            losses: s.cost.losses_value(x),
            vs_passive: s.cost.vs_passive.eval(x),
            vs_active: s.cost.vs_active.eval(x),
            penalty: 0.0,
            total: 0.0,
        });
    }
    book_penalty(&mut rows, ctx.coeffs.c_h, x[problem.s_v.0], x[problem.s_i.0], &eta_v, &eta_i);
    let rows = rows.into_iter().map(|r| r.finish(problem.vs_mode)).collect();
    CostTable { scheme: problem.vs_mode, rows }
}

/// Realized quantities of one step from an exact power flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactStep {
    /// Active and reactive energy exchanged per settlement window
    /// (MWh, Mvarh; export positive).
    pub e_p: f64,
    pub e_q: f64,
    /// Interconnection voltage magnitude.
    pub v_m: f64,
    pub eta_v: f64,
    pub eta_i: f64,
}

/// Costs of a dispatch evaluated on exact power-flow states. Both VS
/// columns are always filled (ex-post charges on metered energies);
/// `scheme` selects the one counted in `total`.
pub fn exact_costs(
    ctx: &OpfContext,
    dg_p: &[Vec<f64>],
    dg_q: &[Vec<f64>],
    states: &[NetworkState],
    exact: &[ExactStep],
    scheme: VsMode,
) -> CostTable {
    let kwh = ctx.kwh_per_pu();
    let weight = ctx.vs_weight();
    let c = ctx.coeffs;
    let mut rows = Vec::with_capacity(states.len());
    for (t, st) in states.iter().enumerate() {
        let curtailment: f64 = (0..ctx.fleet.dg.len()).map(|k| ctx.dg_avail(t, k) - dg_p[t][k]).sum::<f64>() * c.c_curt * kwh;
        let reactive: f64 = dg_q[t].iter().map(|q| q.abs()).sum::<f64>() * c.c_q * kwh;
        let losses: f64 = ctx
            .network
            .branches()
            .iter()
            .zip(&st.branch_losses)
            .filter(|(br, _)| br.kind != BranchKind::Thevenin)
            .map(|(_, l)| l)
            .sum::<f64>()
            * c.c_loss
            * kwh;
        let e = &exact[t];
        let (e_p, e_q) = (metered(e.e_p), metered(e.e_q));
        let lim = passive_qlim(e_p, &ctx.tariff.passive);
        let vs_passive = weight * passive_cost(e_q, lim, ctx.tariff.passive.c_p);
        let a = &ctx.tariff.active;
        let region = active_region(e_q, e.v_m, ctx.inputs.v_set[t], a.epsilon);
        let vs_active = weight * active_cost(e_q, region, a);
        rows.push(CostRow {
            timestamp: ctx.inputs.timestamps[t],
            curtailment,
            reactive,
            losses,
            vs_passive,
            vs_active,
            penalty: 0.0,
            total: 0.0,
        });
    }
    let eta_v: Vec<f64> = exact.iter().map(|e| e.eta_v).collect();
    let eta_i: Vec<f64> = exact.iter().map(|e| e.eta_i).collect();
    let beyond = |eta: &[f64]| {
        let s = eta.iter().copied().fold(0.0, f64::max);
        if s > ctx.options.violation_tol { s } else { 0.0 }
    };
    let (s_v, s_i) = (beyond(&eta_v), beyond(&eta_i));
    book_penalty(&mut rows, c.c_h, s_v, s_i, &eta_v, &eta_i);
    CostTable { scheme, rows: rows.into_iter().map(|r| r.finish(scheme)).collect() }
}
