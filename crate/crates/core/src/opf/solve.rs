//! Relaxed and mixed-integer solves of an [`OpfProblem`] and extraction of
//! the dispatch.

use super::bnb::{branch_and_bound_from, MipResult, MipStatus, PrimalHeuristic};
use super::breakdown::{objective_breakdown, CostTable};
use super::conic::{model_bounds, ConicBackend, ConicSolution};
use super::problem::{build_period, Fixings, Linearization, OpfContext, OpfProblem, StepVars, VsMode};
use super::OpfError;
use crate::model::{BigMBinding, Domain, Model, Var};
use chrono::NaiveDateTime;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Setpoints of one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDispatch {
    pub dg_p: Vec<f64>,
    pub dg_q: Vec<f64>,
    pub bess_ch: Vec<f64>,
    pub bess_dis: Vec<f64>,
    pub bess_q: Vec<f64>,
    /// Stored energy after the step (pu·h).
    pub bess_energy: Vec<f64>,
    pub cl_shift: Vec<i32>,
    pub tap: i32,
}

impl StepDispatch {
    /// Generators at available power and unity power factor, storage idle,
    /// no load shift, configured tap.
    pub fn no_control(ctx: &OpfContext, t: usize) -> Self {
        let nb = ctx.fleet.bess.len();
        Self {
            dg_p: (0..ctx.fleet.dg.len()).map(|k| ctx.dg_avail(t, k)).collect(),
            dg_q: vec![0.0; ctx.fleet.dg.len()],
            bess_ch: vec![0.0; nb],
            bess_dis: vec![0.0; nb],
            bess_q: vec![0.0; nb],
            bess_energy: ctx.fleet.bess.iter().map(|b| b.e_start).collect(),
            cl_shift: vec![0; ctx.fleet.loads.len()],
            tap: ctx.network.transformer().map_or(0, |t| t.tap),
        }
    }
}

/// Scheme indicators of one step.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBinaries {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_p: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_aq: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_av: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_c: Option<u8>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpfSolution {
    pub vs_mode: VsMode,
    pub timestamps: Vec<NaiveDateTime>,
    pub dispatch: Vec<StepDispatch>,
    pub binaries: Vec<StepBinaries>,
    /// `[t][bus]` voltages of the linearized model.
    pub voltages: Vec<Vec<Complex64>>,
    /// Linearized exchange (export positive): pu power and Mvarh per window.
    pub p_exp: Vec<f64>,
    pub q_exp: Vec<f64>,
    pub e_q: Vec<f64>,
    pub v_m: Vec<f64>,
    pub slack_v: f64,
    pub slack_i: f64,
    /// Objective terms of the solved model.
    pub costs: CostTable,
    pub status: MipStatus,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    /// Big-M rows whose off-branch value reaches the bound.
    pub big_m_binding: Vec<BigMBinding>,
    #[serde(skip)]
    pub x: Vec<f64>,
}

/// Continuous relaxation of the whole problem.
pub fn solve_relaxed(problem: &OpfProblem, backend: &dyn ConicBackend) -> Result<ConicSolution, OpfError> {
    Ok(backend.solve(&problem.model, &model_bounds(&problem.model))?)
}

/// Solves the continuous part with the listed variables pinned.
pub fn fix_and_solve(model: &Model, backend: &dyn ConicBackend, fixes: &[(Var, f64)]) -> Option<Vec<f64>> {
    let mut bounds = model_bounds(model);
    for &(v, val) in fixes {
        let (lo, hi) = bounds[v.0];
        if val < lo - 1e-9 || val > hi + 1e-9 {
            return None;
        }
        bounds[v.0] = (val, val);
    }
    backend.solve(model, &bounds).ok().map(|s| s.x)
}

/// Rounds `values` to integers in `[lo, hi]` while keeping their (rounded)
/// sum. Entries moved furthest by plain rounding are corrected first, ties
/// to the lowest index.
pub fn round_preserving_sum(values: &[f64], lo: i32, hi: i32) -> Vec<i32> {
    let mut r: Vec<i32> = values.iter().map(|v| (v.round() as i32).clamp(lo, hi)).collect();
    let target = (values.iter().sum::<f64>().round() as i32).clamp(lo * values.len() as i32, hi * values.len() as i32);
    let mut sum: i32 = r.iter().sum();
    while sum != target {
        let step = if sum > target { -1 } else { 1 };
        let mut best: Option<(usize, f64)> = None;
        for (k, (&rk, &vk)) in r.iter().zip(values).enumerate() {
            let movable = if step < 0 { rk > lo } else { rk < hi };
            // How far the entry currently sits on the wrong side.
            let excess = if step < 0 { f64::from(rk) - vk } else { vk - f64::from(rk) };
            if movable && best.is_none_or(|(_, e)| excess > e + 1e-12) {
                best = Some((k, excess));
            }
        }
        let Some((k, _)) = best else { break };
        r[k] += step;
        sum += step;
    }
    r
}

/// Integer variables of one step, in a fixed order shared by full and
/// single-step problems (load shifts excluded).
fn step_integers(s: &StepVars) -> Vec<Var> {
    let mut out = Vec::new();
    out.extend(s.tap);
    out.extend(s.bess.iter().filter_map(|b| b.z));
    if let Some(p) = &s.passive {
        out.push(p.z);
    }
    if let Some(a) = &s.active {
        out.extend([a.z_aq, a.z_av, a.z_c]);
    }
    out
}

/// Integer values for every integer variable of `problem`, derived from a
/// relaxed point: taps and battery modes rounded, load shifts rounded with
/// their neutrality kept, scheme indicators read from the continuous
/// quantities they classify.
pub fn round_integers(ctx: &OpfContext, problem: &OpfProblem, x: &[f64]) -> Vec<(Var, f64)> {
    let mut fixes = Vec::new();
    for k in 0..ctx.fleet.loads.len() {
        let vals: Vec<f64> = problem.steps.iter().map(|s| x[s.cl[k].0]).collect();
        for (s, n) in problem.steps.iter().zip(round_preserving_sum(&vals, -1, 1)) {
            fixes.push((s.cl[k], f64::from(n)));
        }
    }
    for s in &problem.steps {
        if let Some(tap) = s.tap {
            fixes.push((tap, x[tap.0].round()));
        }
        for b in &s.bess {
            if let Some(z) = b.z {
                fixes.push((z, x[z.0].round()));
            }
        }
        let e_q = s.e_q.eval(x);
        if let Some(p) = &s.passive {
            fixes.push((p.z, if e_q.abs() <= s.e_qlim { 1.0 } else { 0.0 }));
        }
        if let Some(a) = &s.active {
            let z_aq = if e_q.abs() > 1e-9 { f64::from(u8::from(e_q > 0.0)) } else { x[a.z_aq.0].round() };
            let dv = s.v_m.eval(x) - ctx.inputs.v_set[s.t];
            let z_av = if dv.abs() > 1e-9 { f64::from(u8::from(dv < 0.0)) } else { x[a.z_av.0].round() };
            let z_c = if z_aq == z_av { 1.0 } else { 0.0 };
            fixes.extend([(a.z_aq, z_aq), (a.z_av, z_av), (a.z_c, z_c)]);
        }
    }
    fixes
}

/// Structure-aware rounding followed by one convex solve.
pub struct StructuredRounding<'a> {
    pub ctx: &'a OpfContext<'a>,
    pub problem: &'a OpfProblem,
}

impl PrimalHeuristic for StructuredRounding<'_> {
    fn propose(&self, model: &Model, backend: &dyn ConicBackend, relaxed: &[f64]) -> Option<Vec<f64>> {
        fix_and_solve(model, backend, &round_integers(self.ctx, self.problem, relaxed))
    }
}

/// Per-step decomposition: battery power and load shifts are pinned from
/// the relaxation, each step is solved as its own small MIP, and the
/// full horizon is re-solved with all integers fixed.
pub fn decompose(
    ctx: &OpfContext,
    lin: &Linearization,
    problem: &OpfProblem,
    relaxed: &[f64],
    backend: &dyn ConicBackend,
) -> Option<Vec<f64>> {
    let span = problem.span();
    let n = ctx.inputs.steps();
    let mut bess = Vec::new();
    for (k, u) in ctx.fleet.bess.iter().enumerate() {
        let mut row = vec![(0.0, 0.0); n];
        for s in &problem.steps {
            let b = s.bess[k];
            row[s.t] = (relaxed[b.p_ch.0].clamp(0.0, u.p_max), relaxed[b.p_dis.0].clamp(0.0, u.p_max));
        }
        bess.push(row);
    }
    let mut cl = Vec::new();
    let mut cl_fixes = Vec::new();
    for k in 0..ctx.fleet.loads.len() {
        let vals: Vec<f64> = problem.steps.iter().map(|s| relaxed[s.cl[k].0]).collect();
        let mut row = vec![0; n];
        for (s, r) in problem.steps.iter().zip(round_preserving_sum(&vals, -1, 1)) {
            row[s.t] = r;
            cl_fixes.push((s.cl[k], f64::from(r)));
        }
        cl.push(row);
    }
    let fix = Fixings { bess, cl };
    let period_opts = super::bnb::BnbOptions { node_limit: ctx.options.period_node_limit, ..ctx.options.bnb.clone() };
    let per_step: Vec<Option<Vec<f64>>> = span
        .clone()
        .into_par_iter()
        .map(|t| {
            let sub = build_period(ctx, lin, t, &fix).ok()?;
            let rounding = StructuredRounding { ctx, problem: &sub };
            let r = super::bnb::branch_and_bound(&sub.model, backend, &period_opts, &[&rounding], &[]).ok()?;
            Some(step_integers(&sub.steps[0]).iter().map(|v| r.x[v.0]).collect())
        })
        .collect();
    let mut fixes = cl_fixes;
    for (s, vals) in problem.steps.iter().zip(per_step) {
        let vals = vals?;
        fixes.extend(step_integers(s).into_iter().zip(vals));
    }
    fix_and_solve(&problem.model, backend, &fixes)
}

fn integer_fixes(model: &Model, x: &[f64]) -> Vec<(Var, f64)> {
    model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.domain == Domain::Integer)
        .map(|(j, _)| (Var(j), x[j].round()))
        .collect()
}

/// Mixed-integer solve. `warm` is a point of an identically structured
/// problem (for example the previous outer iteration) whose integer values
/// are tried first.
pub fn solve_mip(
    ctx: &OpfContext,
    lin: &Linearization,
    problem: &OpfProblem,
    backend: &dyn ConicBackend,
    warm: Option<&[f64]>,
) -> Result<OpfSolution, OpfError> {
    let model = &problem.model;
    let root = solve_relaxed(problem, backend)?;
    let rounding = StructuredRounding { ctx, problem };
    let mut hints = Vec::new();
    if !model.integer_vars().is_empty() {
        let warm_point = warm
            .filter(|w| w.len() == model.num_vars())
            .and_then(|w| fix_and_solve(model, backend, &integer_fixes(model, w)));
        // The decomposition is the expensive heuristic; a feasible warm point
        // from the previous outer iteration already carries its integers.
        let need_decomposition = warm_point.is_none();
        hints.extend(warm_point);
        hints.extend(rounding.propose(model, backend, &root.x));
        if need_decomposition {
            hints.extend(decompose(ctx, lin, problem, &root.x, backend));
        }
    }
    let mip = branch_and_bound_from(model, backend, &ctx.options.bnb, &[&rounding], &hints, Some(root))?;
    Ok(extract(ctx, problem, &mip))
}

fn bit(x: &[f64], v: Var) -> u8 {
    u8::from(x[v.0] > 0.5)
}

/// Reads dispatch, voltages and costs from a solved point.
pub fn extract(ctx: &OpfContext, problem: &OpfProblem, mip: &MipResult) -> OpfSolution {
    let x = &mip.x;
    let mut dispatch = Vec::with_capacity(problem.steps.len());
    let mut binaries = Vec::with_capacity(problem.steps.len());
    for (pos, s) in problem.steps.iter().enumerate() {
        let bess_energy = (0..ctx.fleet.bess.len())
            .map(|k| problem.energy.get(k).map_or(f64::NAN, |e| x[e[pos].0]))
            .collect();
        dispatch.push(StepDispatch {
            dg_p: s.dg.iter().map(|d| x[d.p.0]).collect(),
            dg_q: s.dg.iter().map(|d| x[d.q.0]).collect(),
            bess_ch: s.bess.iter().map(|b| x[b.p_ch.0]).collect(),
            bess_dis: s.bess.iter().map(|b| x[b.p_dis.0]).collect(),
            bess_q: s.bess.iter().map(|b| x[b.q.0]).collect(),
            bess_energy,
            cl_shift: s.cl.iter().map(|n| x[n.0].round() as i32).collect(),
            tap: s.tap.map_or(0, |t| x[t.0].round() as i32),
        });
        binaries.push(StepBinaries {
            z_p: s.passive.as_ref().map(|p| bit(x, p.z)),
            z_aq: s.active.as_ref().map(|a| bit(x, a.z_aq)),
            z_av: s.active.as_ref().map(|a| bit(x, a.z_av)),
            z_c: s.active.as_ref().map(|a| bit(x, a.z_c)),
        });
    }
    let span = problem.span();
    OpfSolution {
        vs_mode: problem.vs_mode,
        timestamps: ctx.inputs.timestamps[span].to_vec(),
        dispatch,
        binaries,
        voltages: problem
            .steps
            .iter()
            .map(|s| s.v.iter().map(|(re, im)| Complex64::new(re.eval(x), im.eval(x))).collect())
            .collect(),
        p_exp: problem.steps.iter().map(|s| s.p_exp.eval(x)).collect(),
        q_exp: problem.steps.iter().map(|s| s.q_exp.eval(x)).collect(),
        e_q: problem.steps.iter().map(|s| s.e_q.eval(x)).collect(),
        v_m: problem.steps.iter().map(|s| s.v_m.eval(x)).collect(),
        slack_v: x[problem.s_v.0],
        slack_i: x[problem.s_i.0],
        costs: objective_breakdown(ctx, problem, x),
        status: mip.status,
        objective: mip.objective,
        bound: mip.bound,
        gap: mip.gap(),
        nodes: mip.nodes,
        big_m_binding: problem.model.big_m_audit(x),
        x: x.clone(),
    }
}
