//! Algebraic modeling layer for mixed-integer conic programs.
//!
//! A [`Model`] collects bounded variables (continuous or integer), linear
//! constraints, second-order cones and a convex objective made of a linear
//! part plus weighted squares of affine expressions. Constraint blocks from
//! the DER and voltage-support modules are emitted into a `Model`; the
//! branch-and-bound in [`crate::opf::bnb`] solves it through a
//! [`crate::opf::conic::ConicBackend`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Handle of a variable inside one [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Continuous,
    Integer,
}

#[derive(Clone, Debug)]
pub struct VarInfo {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub domain: Domain,
}

/// Affine expression `Σ coef·x + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: Var) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: Var, coef: f64) -> Self {
        Self { terms: vec![(v, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) {
        if scale == 0.0 {
            return;
        }
        for &(v, c) in &other.terms {
            self.terms.push((v, c * scale));
        }
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut e = LinExpr::new();
        e.add_scaled(self, scale);
        e
    }

    /// Merges duplicate variables and drops zero coefficients. Term order
    /// follows variable index so compiled matrices are reproducible.
    pub fn compact(&mut self) {
        if self.terms.len() < 2 {
            self.terms.retain(|t| t.1 != 0.0);
            return;
        }
        let mut merged: BTreeMap<Var, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        self.terms = merged.into_iter().filter(|&(_, c)| c != 0.0).collect();
    }

    pub fn compacted(mut self) -> Self {
        self.compact();
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum::<f64>() + self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.1 == 0.0)
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr::var(v)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, rhs: f64) -> LinExpr {
        self.scaled(rhs)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    /// `expr <= 0`
    Le,
    /// `expr >= 0`
    Ge,
    /// `expr == 0`
    Eq,
}

#[derive(Clone, Debug)]
pub struct LinearConstraint {
    pub name: String,
    pub expr: LinExpr,
    pub rel: Relation,
}

/// `‖parts‖₂ ≤ bound`
#[derive(Clone, Debug)]
pub struct ConeConstraint {
    pub name: String,
    pub bound: LinExpr,
    pub parts: Vec<LinExpr>,
}

/// Record of a big-M constraint `expr ≤ M·(…)` that is switched off by
/// `indicator` taking the value `off_value`.
#[derive(Clone, Debug)]
pub struct BigMRecord {
    pub name: String,
    pub indicator: Var,
    pub off_value: f64,
    /// The constrained quantity, required `≤ 0` when the indicator is on.
    pub expr: LinExpr,
    pub big_m: f64,
}

/// A big-M constraint whose relaxed side came within 1% of `M`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BigMBinding {
    pub name: String,
    pub value: f64,
    pub big_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub name: String,
    pub amount: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Model {
    pub vars: Vec<VarInfo>,
    pub linear: Vec<LinearConstraint>,
    pub cones: Vec<ConeConstraint>,
    /// Linear part of the objective (minimized).
    pub objective: LinExpr,
    /// Convex quadratic part `Σ w·expr²`, `w ≥ 0`.
    pub squares: Vec<(f64, LinExpr)>,
    pub big_m: Vec<BigMRecord>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Var {
        self.push_var(name.into(), lb, ub, Domain::Continuous)
    }

    pub fn add_integer(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Var {
        self.push_var(name.into(), lb, ub, Domain::Integer)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Var {
        self.push_var(name.into(), 0.0, 1.0, Domain::Integer)
    }

    fn push_var(&mut self, name: String, lb: f64, ub: f64, domain: Domain) -> Var {
        debug_assert!(lb <= ub, "{name}: empty domain [{lb}, {ub}]");
        self.vars.push(VarInfo { name, lb, ub, domain });
        Var(self.vars.len() - 1)
    }

    pub fn integer_vars(&self) -> Vec<Var> {
        (0..self.vars.len())
            .filter(|&i| self.vars[i].domain == Domain::Integer)
            .map(Var)
            .collect()
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, expr: LinExpr, rel: Relation) {
        self.linear.push(LinearConstraint { name: name.into(), expr: expr.compacted(), rel });
    }

    /// `lhs ≤ rhs`
    pub fn add_le(&mut self, name: impl Into<String>, lhs: LinExpr, rhs: LinExpr) {
        self.add_constraint(name, lhs - rhs, Relation::Le);
    }

    /// `lhs ≥ rhs`
    pub fn add_ge(&mut self, name: impl Into<String>, lhs: LinExpr, rhs: LinExpr) {
        self.add_constraint(name, lhs - rhs, Relation::Ge);
    }

    /// `lhs = rhs`
    pub fn add_eq(&mut self, name: impl Into<String>, lhs: LinExpr, rhs: LinExpr) {
        self.add_constraint(name, lhs - rhs, Relation::Eq);
    }

    /// `‖parts‖ ≤ bound`
    pub fn add_cone(&mut self, name: impl Into<String>, bound: LinExpr, parts: Vec<LinExpr>) {
        self.cones.push(ConeConstraint {
            name: name.into(),
            bound: bound.compacted(),
            parts: parts.into_iter().map(LinExpr::compacted).collect(),
        });
    }

    /// Big-M form of "`expr ≤ 0` whenever `z == on_value`":
    /// `expr ≤ M·(1 − z)` for `on_value = true`, `expr ≤ M·z` otherwise.
    pub fn add_big_m_le(&mut self, name: impl Into<String>, z: Var, on_value: bool, expr: LinExpr, big_m: f64) {
        let name = name.into();
        let relax = if on_value {
            LinExpr::constant(big_m) - LinExpr::term(z, big_m)
        } else {
            LinExpr::term(z, big_m)
        };
        self.add_le(name.clone(), expr.clone(), relax);
        self.big_m.push(BigMRecord {
            name,
            indicator: z,
            off_value: if on_value { 0.0 } else { 1.0 },
            expr: expr.compacted(),
            big_m,
        });
    }

    pub fn add_objective(&mut self, expr: &LinExpr) {
        self.objective.add_scaled(expr, 1.0);
    }

    pub fn add_square(&mut self, weight: f64, expr: LinExpr) {
        debug_assert!(weight >= 0.0);
        if weight > 0.0 {
            self.squares.push((weight, expr.compacted()));
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
            + self
                .squares
                .iter()
                .map(|(w, e)| {
                    let v = e.eval(x);
                    w * v * v
                })
                .sum::<f64>()
    }

    /// All constraint, bound and integrality violations larger than `tol`.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, v) in self.vars.iter().enumerate() {
            let amount = (v.lb - x[i]).max(x[i] - v.ub);
            if amount > tol {
                out.push(Violation { name: format!("bound:{}", v.name), amount });
            }
            if v.domain == Domain::Integer {
                let frac = (x[i] - x[i].round()).abs();
                if frac > tol {
                    out.push(Violation { name: format!("integrality:{}", v.name), amount: frac });
                }
            }
        }
        for c in &self.linear {
            let val = c.expr.eval(x);
            let amount = match c.rel {
                Relation::Le => val,
                Relation::Ge => -val,
                Relation::Eq => val.abs(),
            };
            if amount > tol {
                out.push(Violation { name: c.name.clone(), amount });
            }
        }
        for c in &self.cones {
            let norm = c.parts.iter().map(|p| p.eval(x).powi(2)).sum::<f64>().sqrt();
            let amount = norm - c.bound.eval(x);
            if amount > tol {
                out.push(Violation { name: c.name.clone(), amount });
            }
        }
        out
    }

    /// Big-M constraints whose indicator is off and whose quantity reached
    /// 99% of `M`, meaning `M` may be cutting off solutions.
    pub fn big_m_audit(&self, x: &[f64]) -> Vec<BigMBinding> {
        self.big_m
            .iter()
            .filter(|r| (x[r.indicator.0] - r.off_value).abs() < 0.5)
            .filter_map(|r| {
                let value = r.expr.eval(x);
                (value >= 0.99 * r.big_m).then(|| BigMBinding { name: r.name.clone(), value, big_m: r.big_m })
            })
            .collect()
    }

    /// Plain-text listing of the problem for cross-checking with external
    /// solvers. Format:
    ///
    /// ```text
    /// MODEL <vars> <linear> <cones>
    /// VAR <index> <name> <C|I> <lb> <ub>
    /// OBJ <const> { <coef> x<index> }
    /// SQR <weight> <const> { <coef> x<index> }
    /// LIN <name> <LE|GE|EQ> <const> { <coef> x<index> }
    /// SOC <name> <nparts>
    ///   BOUND <const> { <coef> x<index> }
    ///   PART <const> { <coef> x<index> }
    /// END
    /// ```
    ///
    /// Linear rows read `const + Σ coef·x  (LE|GE|EQ)  0`; a cone reads
    /// `‖(PART…)‖₂ ≤ BOUND`.
    pub fn export_text(&self) -> String {
        fn expr_str(e: &LinExpr) -> String {
            let mut s = format!("{:e}", e.constant);
            for &(v, c) in &e.terms {
                let _ = write!(s, " {:e} x{}", c, v.0);
            }
            s
        }
        let mut out = String::new();
        let _ = writeln!(out, "MODEL {} {} {}", self.vars.len(), self.linear.len(), self.cones.len());
        for (i, v) in self.vars.iter().enumerate() {
            let d = if v.domain == Domain::Integer { 'I' } else { 'C' };
            let _ = writeln!(out, "VAR {} {} {} {:e} {:e}", i, v.name, d, v.lb, v.ub);
        }
        let _ = writeln!(out, "OBJ {}", expr_str(&self.objective));
        for (w, e) in &self.squares {
            let _ = writeln!(out, "SQR {:e} {}", w, expr_str(e));
        }
        for c in &self.linear {
            let rel = match c.rel {
                Relation::Le => "LE",
                Relation::Ge => "GE",
                Relation::Eq => "EQ",
            };
            let _ = writeln!(out, "LIN {} {} {}", c.name, rel, expr_str(&c.expr));
        }
        for c in &self.cones {
            let _ = writeln!(out, "SOC {} {}", c.name, c.parts.len());
            let _ = writeln!(out, "  BOUND {}", expr_str(&c.bound));
            for p in &c.parts {
                let _ = writeln!(out, "  PART {}", expr_str(p));
            }
        }
        out.push_str("END\n");
        out
    }
}
