//! Continuous conic subproblems (linear rows, second-order cones, convex
//! quadratic objective) and the Clarabel backend.

use crate::model::{Model, Relation};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("conic solver failed: {0}")]
    Backend(String),
    #[error("relaxation infeasible")]
    Infeasible,
    #[error("no integer-feasible solution found within {nodes} nodes")]
    NoIncumbent { nodes: usize },
    #[error("unknown solver backend '{0}'")]
    UnknownBackend(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    /// Solver stopped early but the point satisfies the constraints to the
    /// acceptance tolerance.
    Inaccurate,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Solver for the continuous relaxation of a [`Model`] with the given
/// variable bounds (integrality ignored).
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, model: &Model, bounds: &[(f64, f64)]) -> Result<ConicSolution, SolverError>;
}

/// Feasibility tolerance used to accept inexact terminations.
const ACCEPT_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub tol: f64,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-8 }
    }
}

/// Backend selected by `GRIDVOLT_SOLVER` (`internal` when unset).
pub fn backend_from_env() -> Result<Box<dyn ConicBackend>, SolverError> {
    match std::env::var("GRIDVOLT_SOLVER").as_deref() {
        Err(_) | Ok("") | Ok("internal") | Ok("clarabel") => Ok(Box::new(ClarabelBackend::default())),
        Ok(other) => Err(SolverError::UnknownBackend(other.to_string())),
    }
}

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
    m: usize,
}

impl Rows {
    fn push(&mut self, coefs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        for (j, v) in coefs {
            if v != 0.0 {
                self.i.push(self.m);
                self.j.push(j);
                self.v.push(v);
            }
        }
        self.b.push(rhs);
        self.m += 1;
    }
}

impl ClarabelBackend {
    fn settings(&self) -> DefaultSettings<f64> {
        DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .max_threads(1)
            .presolve_enable(true)
            .build()
            .expect("valid settings")
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "internal"
    }

    fn solve(&self, model: &Model, bounds: &[(f64, f64)]) -> Result<ConicSolution, SolverError> {
        let n = model.num_vars();
        // Quadratic part: ½xᵀPx + qᵀx with P upper triangular.
        let mut p_acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut q = vec![0.0; n];
        for t in &model.objective.terms {
            q[t.0 .0] += t.1;
        }
        for (w, e) in &model.squares {
            for &(vi, ci) in &e.terms {
                q[vi.0] += 2.0 * w * e.constant * ci;
                for &(vj, cj) in &e.terms {
                    if vi.0 <= vj.0 {
                        *p_acc.entry((vi.0, vj.0)).or_insert(0.0) += 2.0 * w * ci * cj;
                    }
                }
            }
        }
        let (pi, (pj, pv)): (Vec<usize>, (Vec<usize>, Vec<f64>)) =
            p_acc.into_iter().map(|((i, j), v)| (i, (j, v))).unzip();
        let p = CscMatrix::new_from_triplets(n, n, pi, pj, pv);

        // Rows in cone order: zero, nonnegative, then one SOC per cone.
        let mut zero = Rows { i: vec![], j: vec![], v: vec![], b: vec![], m: 0 };
        let mut nonneg = Rows { i: vec![], j: vec![], v: vec![], b: vec![], m: 0 };
        for c in &model.linear {
            let coefs = c.expr.terms.iter().map(|&(v, a)| (v.0, a));
            match c.rel {
                // a·x + c = 0  →  a·x + s = −c, s = 0
                Relation::Eq => zero.push(coefs, -c.expr.constant),
                // a·x + c ≤ 0  →  a·x + s = −c, s ≥ 0
                Relation::Le => nonneg.push(coefs, -c.expr.constant),
                // a·x + c ≥ 0  →  −a·x + s = c
                Relation::Ge => nonneg.push(coefs.map(|(j, a)| (j, -a)), c.expr.constant),
            }
        }
        for (j, &(lb, ub)) in bounds.iter().enumerate() {
            if lb == ub {
                zero.push([(j, 1.0)], lb);
                continue;
            }
            if ub.is_finite() {
                nonneg.push([(j, 1.0)], ub);
            }
            if lb.is_finite() {
                nonneg.push([(j, -1.0)], -lb);
            }
        }
        let mut soc = Rows { i: vec![], j: vec![], v: vec![], b: vec![], m: 0 };
        let mut soc_dims = Vec::with_capacity(model.cones.len());
        for c in &model.cones {
            // s = b − A·x = e(x)  →  A = −a, b = const
            for e in std::iter::once(&c.bound).chain(&c.parts) {
                soc.push(e.terms.iter().map(|&(v, a)| (v.0, -a)), e.constant);
            }
            soc_dims.push(1 + c.parts.len());
        }

        let mut cones = Vec::new();
        if zero.m > 0 {
            cones.push(SupportedConeT::ZeroConeT(zero.m));
        }
        if nonneg.m > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg.m));
        }
        cones.extend(soc_dims.iter().map(|&d| SupportedConeT::SecondOrderConeT(d)));

        let m = zero.m + nonneg.m + soc.m;
        let mut ai = zero.i;
        let mut aj = zero.j;
        let mut av = zero.v;
        let mut b = zero.b;
        ai.extend(nonneg.i.iter().map(|r| r + zero.m));
        aj.extend(nonneg.j);
        av.extend(nonneg.v);
        b.extend(nonneg.b);
        ai.extend(soc.i.iter().map(|r| r + zero.m + nonneg.m));
        aj.extend(soc.j);
        av.extend(soc.v);
        b.extend(soc.b);
        let a = CscMatrix::new_from_triplets(m, n, ai, aj, av);

        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, self.settings())
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => ConicStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => return Err(SolverError::Infeasible),
            SolverStatus::MaxIterations | SolverStatus::InsufficientProgress | SolverStatus::NumericalError => {
                ConicStatus::Inaccurate
            }
            other => return Err(SolverError::Backend(format!("{other:?}"))),
        };
        let x = sol.x.clone();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Backend(format!("{:?} with non-finite iterate", sol.status)));
        }
        if status == ConicStatus::Inaccurate {
            let worst = bounded_violation(model, bounds, &x);
            if worst > ACCEPT_TOL {
                return Err(SolverError::Backend(format!("{:?} (max violation {worst:.2e})", sol.status)));
            }
        }
        let objective = model.objective_value(&x);
        Ok(ConicSolution { status, x, objective })
    }
}

/// Largest constraint or bound violation (integrality ignored).
pub fn bounded_violation(model: &Model, bounds: &[(f64, f64)], x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, &(lb, ub)) in bounds.iter().enumerate() {
        worst = worst.max(lb - x[j]).max(x[j] - ub);
    }
    for c in &model.linear {
        let v = c.expr.eval(x);
        worst = worst.max(match c.rel {
            Relation::Le => v,
            Relation::Ge => -v,
            Relation::Eq => v.abs(),
        });
    }
    for c in &model.cones {
        let norm = c.parts.iter().map(|p| p.eval(x).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(norm - c.bound.eval(x));
    }
    worst
}

pub fn model_bounds(model: &Model) -> Vec<(f64, f64)> {
    model.vars.iter().map(|v| (v.lb, v.ub)).collect()
}
