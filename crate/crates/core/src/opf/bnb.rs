//! Best-first branch-and-bound over the integer variables of a [`Model`].
//!
//! Nodes are explored in order of (parent bound, creation index), branching
//! on the most fractional variable with ties to the lowest index, so the
//! search is deterministic.

use super::conic::{model_bounds, ConicBackend, ConicSolution, SolverError};
use crate::model::{Domain, Model};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Debug)]
pub struct BnbOptions {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub node_limit: usize,
    pub int_tol: f64,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self { rel_gap: 1e-4, abs_gap: 1e-6, node_limit: 500, int_tol: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MipStatus {
    /// Gap closed to tolerance.
    Optimal,
    /// Node limit reached with an incumbent.
    NodeLimit,
}

#[derive(Clone, Debug)]
pub struct MipResult {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
}

impl MipResult {
    pub fn gap(&self) -> f64 {
        relative_gap(self.objective, self.bound)
    }
}

pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    let diff = (incumbent - bound).max(0.0);
    if diff == 0.0 {
        0.0
    } else {
        diff / incumbent.abs().max(1e-9)
    }
}

/// Produces candidate integer-feasible points from a relaxation.
pub trait PrimalHeuristic {
    /// `relaxed` is the node relaxation; returns a point that satisfies the
    /// model (checked by the caller) or `None`.
    fn propose(&self, model: &Model, backend: &dyn ConicBackend, relaxed: &[f64]) -> Option<Vec<f64>>;
}

/// Fixes every integer to the nearest value within bounds and re-solves the
/// continuous part.
pub struct Rounding;

impl PrimalHeuristic for Rounding {
    fn propose(&self, model: &Model, backend: &dyn ConicBackend, relaxed: &[f64]) -> Option<Vec<f64>> {
        let mut bounds = model_bounds(model);
        for (j, v) in model.vars.iter().enumerate() {
            if v.domain == Domain::Integer {
                let r = relaxed[j].round().clamp(v.lb, v.ub);
                bounds[j] = (r, r);
            }
        }
        backend.solve(model, &bounds).ok().map(|s| s.x)
    }
}

struct Node {
    bound: f64,
    id: usize,
    bounds: Vec<(f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: reverse so the smallest bound pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

fn most_fractional(model: &Model, x: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in model.vars.iter().enumerate() {
        if v.domain != Domain::Integer {
            continue;
        }
        let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if frac > tol && best.is_none_or(|(_, f)| frac > f + 1e-12) {
            best = Some((j, frac));
        }
    }
    best.map(|(j, _)| j)
}

/// Snaps integer variables and checks the point against the model.
fn accept(model: &Model, x: &[f64], tol: f64) -> Option<Vec<f64>> {
    let mut y = x.to_vec();
    for (j, v) in model.vars.iter().enumerate() {
        if v.domain == Domain::Integer {
            y[j] = y[j].round();
        }
    }
    model.violations(&y, tol).is_empty().then_some(y)
}

/// Feasibility tolerance for incumbents.
pub const FEAS_TOL: f64 = 1e-6;

/// Solves `model` to the requested gap. `hints` are candidate points (for
/// example the previous solution) tried before the search.
pub fn branch_and_bound(
    model: &Model,
    backend: &dyn ConicBackend,
    opts: &BnbOptions,
    heuristics: &[&dyn PrimalHeuristic],
    hints: &[Vec<f64>],
) -> Result<MipResult, SolverError> {
    branch_and_bound_from(model, backend, opts, heuristics, hints, None)
}

/// As [`branch_and_bound`], reusing an already solved root relaxation.
pub fn branch_and_bound_from(
    model: &Model,
    backend: &dyn ConicBackend,
    opts: &BnbOptions,
    heuristics: &[&dyn PrimalHeuristic],
    hints: &[Vec<f64>],
    root: Option<ConicSolution>,
) -> Result<MipResult, SolverError> {
    let root_bounds = model_bounds(model);
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let offer = |x: Vec<f64>, inc: &mut Option<(f64, Vec<f64>)>| {
        if let Some(y) = accept(model, &x, FEAS_TOL) {
            let obj = model.objective_value(&y);
            if inc.as_ref().is_none_or(|(best, _)| obj < *best - 1e-12) {
                *inc = Some((obj, y));
            }
        }
    };
    for h in hints {
        if h.len() == model.num_vars() {
            offer(h.clone(), &mut incumbent);
        }
    }

    let root = match root {
        Some(r) => r,
        None => backend.solve(model, &root_bounds)?,
    };
    let mut nodes = 1;
    if let Some(y) = accept(model, &root.x, opts.int_tol.max(FEAS_TOL)) {
        offer(y, &mut incumbent);
    } else {
        for h in heuristics {
            if let Some(x) = h.propose(model, backend, &root.x) {
                offer(x, &mut incumbent);
            }
        }
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let closed = |inc: &Option<(f64, Vec<f64>)>, bound: f64| {
        inc.as_ref().is_some_and(|(obj, _)| {
            obj - bound <= opts.abs_gap || relative_gap(*obj, bound) <= opts.rel_gap
        })
    };
    if most_fractional(model, &root.x, opts.int_tol).is_some() && !closed(&incumbent, root.objective) {
        heap.push(Node { bound: root.objective, id: next_id, bounds: root_bounds.clone() });
        next_id += 1;
    }
    let mut pending_x: Vec<(usize, Vec<f64>)> = vec![(0, root.x)];

    // Lowest open bound when the search stops early; best-first order makes
    // the popped node the minimum.
    let mut open_bound: Option<f64> = None;
    let mut hit_limit = false;
    while let Some(node) = heap.pop() {
        if closed(&incumbent, node.bound) {
            open_bound = Some(node.bound);
            break;
        }
        if nodes >= opts.node_limit {
            open_bound = Some(node.bound);
            hit_limit = true;
            break;
        }
        // The stored relaxation point of this node (solved when created).
        let x = match pending_x.iter().position(|(id, _)| *id == node.id) {
            Some(p) => pending_x.swap_remove(p).1,
            None => continue,
        };
        let Some(j) = most_fractional(model, &x, opts.int_tol) else { continue };
        let down = x[j].floor();
        for (lo, hi) in [(node.bounds[j].0, down), (down + 1.0, node.bounds[j].1)] {
            if lo > hi {
                continue;
            }
            let mut b = node.bounds.clone();
            b[j] = (lo, hi);
            nodes += 1;
            let sol = match backend.solve(model, &b) {
                Ok(s) => s,
                Err(SolverError::Infeasible) => continue,
                Err(e) => {
                    log::warn!("node relaxation failed: {e}");
                    continue;
                }
            };
            if incumbent.as_ref().is_some_and(|(obj, _)| sol.objective >= *obj - opts.abs_gap) {
                continue;
            }
            if let Some(y) = accept(model, &sol.x, opts.int_tol.max(FEAS_TOL)) {
                offer(y, &mut incumbent);
                continue;
            }
            if nodes % 16 == 0 {
                for h in heuristics {
                    if let Some(c) = h.propose(model, backend, &sol.x) {
                        offer(c, &mut incumbent);
                    }
                }
            }
            let id = next_id;
            next_id += 1;
            pending_x.push((id, sol.x));
            heap.push(Node { bound: sol.objective, id, bounds: b });
        }
    }
    let (objective, x) = incumbent.ok_or(SolverError::NoIncumbent { nodes })?;
    let bound = open_bound.unwrap_or(objective).min(objective);
    let status = if hit_limit { MipStatus::NodeLimit } else { MipStatus::Optimal };
    Ok(MipResult { status, x, objective, bound, nodes })
}
