//! Outer loop: linearize, solve, project onto the exact power flow, repeat.

use super::breakdown::{exact_costs, step_violations, CostTable, ExactStep};
use super::conic::{ConicBackend, SolverError};
use super::problem::{build_problem, Linearization, OpfContext, VsMode};
use super::solve::{solve_mip, OpfSolution, StepDispatch};
use super::OpfError;
use crate::powerflow::{
    interconnection_exchange, interconnection_voltage, solve_bfs_with, InjectionSet, NetworkState, PfOptions,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// Max voltage-magnitude mismatch of each iteration (pu).
    pub mismatch: Vec<f64>,
    pub status: OuterStatus,
    /// Iteration (1-based) whose solution is reported.
    pub selected: usize,
}

/// A dispatch evaluated with the exact power flow.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExactEvaluation {
    pub states: Vec<NetworkState>,
    pub steps: Vec<ExactStep>,
    pub costs: CostTable,
}

impl ExactEvaluation {
    pub fn linearization(&self) -> Linearization {
        Linearization {
            v: self.states.iter().map(|s| s.voltages.clone()).collect(),
            e_p_ref: self.steps.iter().map(|s| s.e_p).collect(),
        }
    }
}

/// Bus injections produced by a dispatch at step `t`.
pub fn injections(ctx: &OpfContext, d: &StepDispatch, t: usize) -> InjectionSet {
    let net = ctx.network;
    let fleet = ctx.fleet;
    let inp = ctx.inputs;
    let mut inj = InjectionSet { p: inp.load_p[t].iter().map(|v| -v).collect(), q: inp.load_q[t].iter().map(|v| -v).collect() };
    let at = |bus| net.bus_index(bus).expect("fleet buses are checked");
    for (k, u) in fleet.dg.iter().enumerate() {
        inj.p[at(u.bus)] += d.dg_p[k];
        inj.q[at(u.bus)] += d.dg_q[k];
    }
    for (k, u) in fleet.bess.iter().enumerate() {
        inj.p[at(u.bus)] += d.bess_dis[k] - d.bess_ch[k];
        inj.q[at(u.bus)] += d.bess_q[k];
    }
    for (k, l) in fleet.loads.iter().enumerate() {
        inj.p[at(l.bus)] -= inp.cl_baseline[t][k] + f64::from(d.cl_shift[k]) * l.p_shift;
    }
    inj
}

/// Exact power flow of every step. `warm` seeds each sweep.
pub fn evaluate_exact(
    ctx: &OpfContext,
    dispatch: &[StepDispatch],
    warm: Option<&Linearization>,
    scheme: VsMode,
) -> Result<ExactEvaluation, OpfError> {
    let e_scale = ctx.network.base_mva * ctx.window_h();
    let mut states = Vec::with_capacity(dispatch.len());
    let mut steps = Vec::with_capacity(dispatch.len());
    for (t, d) in dispatch.iter().enumerate() {
        let mut opts = PfOptions::new(ctx.network, d.tap);
        opts.source = ctx.inputs.source[t];
        opts.warm_start = warm.map(|w| w.v[t].clone());
        let st = solve_bfs_with(ctx.network, &injections(ctx, d, t), &opts)?;
        let s = interconnection_exchange(&st, ctx.network);
        let (eta_v, eta_i) = step_violations(ctx, &st.voltages, &st.branch_currents, false);
        steps.push(ExactStep {
            e_p: s.re * e_scale,
            e_q: s.im * e_scale,
            v_m: interconnection_voltage(&st, ctx.network),
            eta_v,
            eta_i,
        });
        states.push(st);
    }
    let dg_p: Vec<Vec<f64>> = dispatch.iter().map(|d| d.dg_p.clone()).collect();
    let dg_q: Vec<Vec<f64>> = dispatch.iter().map(|d| d.dg_q.clone()).collect();
    let costs = exact_costs(ctx, &dg_p, &dg_q, &states, &steps, scheme);
    Ok(ExactEvaluation { states, steps, costs })
}

/// The uncontrolled operating point: generators at available power with
/// unity power factor, storage idle, default tap.
pub fn no_control(ctx: &OpfContext) -> Result<(Vec<StepDispatch>, ExactEvaluation), OpfError> {
    let dispatch: Vec<StepDispatch> = (0..ctx.inputs.steps()).map(|t| StepDispatch::no_control(ctx, t)).collect();
    let eval = evaluate_exact(ctx, &dispatch, None, ctx.vs_mode)?;
    Ok((dispatch, eval))
}

fn max_mismatch(sol: &OpfSolution, exact: &ExactEvaluation) -> f64 {
    let mut worst: f64 = 0.0;
    for (v_opf, st) in sol.voltages.iter().zip(&exact.states) {
        for (a, b) in v_opf.iter().zip(&st.voltages).skip(1) {
            worst = worst.max((a.norm() - b.norm()).abs());
        }
    }
    worst
}

/// Result of the outer loop; costs are those of the exact power flow.
#[derive(Clone, Debug)]
pub struct IterativeOutcome {
    pub solution: OpfSolution,
    pub report: ConvergenceReport,
    pub exact: ExactEvaluation,
}

/// Iterates linearized solves until the linearized and exact voltage
/// magnitudes agree to `ctx.options.tol`, starting from the no-control
/// power flow.
pub fn solve_iterative(ctx: &OpfContext, backend: &dyn ConicBackend) -> Result<IterativeOutcome, OpfError> {
    ctx.validate()?;
    let (_, base) = no_control(ctx)?;
    let mut lin = base.linearization();
    let mut mismatch = Vec::new();
    let mut best: Option<(f64, usize, OpfSolution, ExactEvaluation)> = None;
    let mut warm: Option<Vec<f64>> = None;
    let mut status = OuterStatus::MaxIter;
    for k in 1..=ctx.options.max_outer.max(1) {
        let problem = build_problem(ctx, &lin)?;
        let sol = match solve_mip(ctx, &lin, &problem, backend, warm.as_deref()) {
            Ok(s) => s,
            Err(OpfError::Solver(SolverError::Infeasible | SolverError::NoIncumbent { .. })) if best.is_some() => {
                status = OuterStatus::Infeasible;
                break;
            }
            Err(e) => return Err(e),
        };
        let exact = evaluate_exact(ctx, &sol.dispatch, Some(&lin), ctx.vs_mode)?;
        let mm = max_mismatch(&sol, &exact);
        log::debug!("outer iteration {k}: mismatch {mm:.3e}, objective {:.6}", sol.objective);
        mismatch.push(mm);
        lin = exact.linearization();
        warm = Some(sol.x.clone());
        if best.as_ref().is_none_or(|b| mm < b.0) {
            best = Some((mm, k, sol, exact));
        }
        if mm < ctx.options.tol {
            status = OuterStatus::Converged;
            break;
        }
    }
    let (_, selected, solution, exact) = best.expect("at least one iteration ran");
    let report = ConvergenceReport { iterations: mismatch.len(), mismatch, status, selected };
    Ok(IterativeOutcome { solution, report, exact })
}
