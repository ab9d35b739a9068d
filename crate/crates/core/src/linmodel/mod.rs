//! Solver-agnostic mixed-integer linear model construction and the contract
//! any optimization backend must satisfy.
//!
//! Models are built variable by variable and row by row, then handed to a
//! [`Backend`]. Two backends ship with the crate: [`HighsBackend`] wraps the
//! HiGHS engine and is the default; [`FallbackBackend`] is a pure-Rust
//! branch-and-bound over a dense simplex, sufficient for desk-scale
//! instances.

mod fallback;
mod highs_backend;
mod lp_format;

pub use fallback::FallbackBackend;
pub use highs_backend::HighsBackend;
pub use lp_format::write_lp;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::threat::BackendChoice;

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

/// Variable kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Constraint comparison operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

/// Handle to a variable of a specific [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarRef {
    model: u64,
    index: u32,
}

impl VarRef {
    pub fn index(&self) -> usize {
        self.index as usize
    }
}

#[derive(Debug, Clone)]
pub(crate) struct VarDef {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub name: String,
}

/// A linear expression: sum of coefficient * variable plus a constant.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    terms: Vec<(VarRef, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn constant(value: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn term(var: VarRef, coef: f64) -> Self {
        let mut e = LinExpr::new();
        e.add(var, coef);
        e
    }

    /// Adds `coef * var` to the expression.
    pub fn add(&mut self, var: VarRef, coef: f64) -> &mut Self {
        self.terms.push((var, coef));
        self
    }

    pub fn add_constant(&mut self, value: f64) -> &mut Self {
        self.constant += value;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(v, c) in &other.terms {
            self.terms.push((v, c * scale));
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn constant_part(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[(VarRef, f64)] {
        &self.terms
    }

    /// Merges duplicate variables and drops zero coefficients.
    pub fn normalize(&mut self) {
        self.terms.sort_by_key(|(v, _)| (v.model, v.index));
        let mut out: Vec<(VarRef, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match out.last_mut() {
                Some((last, acc)) if *last == v => *acc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }

    /// Evaluates the expression at a primal point.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(v, c)| c * values[v.index()])
                .sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub expr: LinExpr,
    pub cmp: Cmp,
    pub rhs: f64,
    pub name: String,
}

/// A mixed-integer linear model.
#[derive(Debug)]
pub struct Model {
    id: u64,
    name: String,
    sense: Sense,
    pub(crate) vars: Vec<VarDef>,
    pub(crate) constraints: Vec<Constraint>,
    pub(crate) objective: LinExpr,
}

impl Model {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        Model {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            name: name.into(),
            sense,
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: LinExpr::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Adds a continuous variable with the given bounds.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarRef {
        self.push_var(VarDef {
            kind: VarKind::Continuous,
            lower,
            upper,
            name: name.into(),
        })
    }

    /// Adds a binary variable.
    pub fn add_binary(&mut self, name: impl Into<String>) -> VarRef {
        self.push_var(VarDef {
            kind: VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
            name: name.into(),
        })
    }

    fn push_var(&mut self, def: VarDef) -> VarRef {
        debug_assert!(def.lower <= def.upper, "inverted bounds on {}", def.name);
        let index = self.vars.len() as u32;
        self.vars.push(def);
        VarRef {
            model: self.id,
            index,
        }
    }

    pub fn var_kind(&self, var: VarRef) -> VarKind {
        self.vars[var.index()].kind
    }

    pub fn var_name(&self, var: VarRef) -> &str {
        &self.vars[var.index()].name
    }

    pub fn var_bounds(&self, var: VarRef) -> (f64, f64) {
        let def = &self.vars[var.index()];
        (def.lower, def.upper)
    }

    fn check_owned(&self, expr: &LinExpr) -> Result<()> {
        for (v, _) in expr.terms() {
            if v.model != self.id || v.index() >= self.vars.len() {
                return Err(Error::ForeignVariable);
            }
        }
        Ok(())
    }

    /// Adds `expr cmp rhs`; the expression's constant is folded into the
    /// right-hand side. Returns the constraint's index.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        mut expr: LinExpr,
        cmp: Cmp,
        rhs: f64,
    ) -> Result<usize> {
        self.check_owned(&expr)?;
        expr.normalize();
        let shifted = rhs - expr.constant_part();
        expr.constant = 0.0;
        self.constraints.push(Constraint {
            expr,
            cmp,
            rhs: shifted,
            name: name.into(),
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn set_objective(&mut self, mut expr: LinExpr) -> Result<()> {
        self.check_owned(&expr)?;
        expr.normalize();
        self.objective = expr;
        Ok(())
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    /// Largest violation of any constraint or bound at a primal point.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (k, def) in self.vars.iter().enumerate() {
            worst = worst.max(def.lower - values[k]).max(values[k] - def.upper);
        }
        for con in &self.constraints {
            let lhs = con.expr.eval(values);
            let gap = match con.cmp {
                Cmp::Le => lhs - con.rhs,
                Cmp::Ge => con.rhs - lhs,
                Cmp::Eq => (lhs - con.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }
}

/// Solver parameters shared by all backends.
#[derive(Debug, Clone)]
pub struct SolveParams {
    pub mip_gap: f64,
    pub feasibility_tol: f64,
    pub seed: u64,
    pub time_limit: f64,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            mip_gap: 1e-6,
            feasibility_tol: 1e-7,
            seed: 0,
            time_limit: 3600.0,
        }
    }
}

impl SolveParams {
    pub fn from_algorithm(options: &crate::threat::AlgorithmOptions) -> Self {
        SolveParams {
            mip_gap: options.mip_gap,
            feasibility_tol: options.feasibility_tol,
            seed: options.seed,
            time_limit: options.time_limit,
        }
    }
}

/// Solve outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// A node, time, or iteration limit stopped the solve.
    Limit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Limit => "limit",
        };
        f.write_str(s)
    }
}

/// Primal solution returned by a backend.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective_value: f64,
    pub primal: Vec<f64>,
    pub mip_gap: f64,
}

impl SolveResult {
    pub fn value(&self, var: VarRef) -> f64 {
        self.primal[var.index()]
    }

    /// Errors unless the status is optimal.
    pub fn expect_optimal(self, context: &str) -> Result<SolveResult> {
        if self.status == SolveStatus::Optimal {
            Ok(self)
        } else {
            Err(Error::NotOptimal {
                status: self.status.to_string(),
                context: context.to_string(),
            })
        }
    }
}

/// Contract any MILP engine must satisfy: build, solve, extract.
///
/// Distinct models may be solved concurrently; implementations declare
/// whether their engine is safe for that and serialize internally if not.
pub trait Backend: Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, model: &Model, params: &SolveParams) -> Result<SolveResult>;
}

/// Constructs the configured backend.
pub fn make_backend(choice: BackendChoice) -> Box<dyn Backend> {
    match choice {
        BackendChoice::Highs => Box::new(HighsBackend::new()),
        BackendChoice::Fallback => Box::new(FallbackBackend::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backends() -> Vec<Box<dyn Backend>> {
        vec![
            Box::new(HighsBackend::new()),
            Box::new(FallbackBackend::new()),
        ]
    }

    #[test]
    fn one_variable_lp() {
        for backend in backends() {
            let mut m = Model::new("one_var", Sense::Minimize);
            let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
            m.add_constraint("floor", LinExpr::term(x, 1.0), Cmp::Ge, 3.0)
                .unwrap();
            m.set_objective(LinExpr::term(x, 1.0)).unwrap();
            let r = backend.solve(&m, &SolveParams::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal, "{}", backend.name());
            assert!((r.objective_value - 3.0).abs() < 1e-9);
            assert!(m.max_violation(&r.primal) < 1e-7);
        }
    }

    #[test]
    fn tiny_milp() {
        for backend in backends() {
            let mut m = Model::new("tiny_milp", Sense::Maximize);
            let x = m.add_binary("x");
            let y = m.add_binary("y");
            let mut e = LinExpr::new();
            e.add(x, 1.0).add(y, 1.0);
            m.add_constraint("cap", e.clone(), Cmp::Le, 1.0).unwrap();
            m.set_objective(e).unwrap();
            let r = backend.solve(&m, &SolveParams::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert!((r.objective_value - 1.0).abs() < 1e-9, "{}", backend.name());
        }
    }

    #[test]
    fn infeasible_pair_is_signaled() {
        for backend in backends() {
            let mut m = Model::new("infeasible", Sense::Minimize);
            let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
            m.add_constraint("le", LinExpr::term(x, 1.0), Cmp::Le, 0.0)
                .unwrap();
            m.add_constraint("ge", LinExpr::term(x, 1.0), Cmp::Ge, 1.0)
                .unwrap();
            m.set_objective(LinExpr::term(x, 1.0)).unwrap();
            let r = backend.solve(&m, &SolveParams::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Infeasible, "{}", backend.name());
        }
    }

    #[test]
    fn empty_model_is_trivially_optimal() {
        for backend in backends() {
            let m = Model::new("empty", Sense::Minimize);
            let r = backend.solve(&m, &SolveParams::default()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal);
            assert_eq!(r.objective_value, 0.0);
        }
    }

    #[test]
    fn foreign_variable_rejected() {
        let mut a = Model::new("a", Sense::Minimize);
        let mut b = Model::new("b", Sense::Minimize);
        let x = a.add_var("x", 0.0, 1.0);
        let err = b
            .add_constraint("bad", LinExpr::term(x, 1.0), Cmp::Le, 1.0)
            .unwrap_err();
        assert!(matches!(err, Error::ForeignVariable));
    }

    #[test]
    fn resolve_is_deterministic() {
        for backend in backends() {
            let mut m = Model::new("det", Sense::Minimize);
            let x = m.add_var("x", 0.0, 10.0);
            let y = m.add_var("y", 0.0, 10.0);
            let mut e = LinExpr::new();
            e.add(x, 1.0).add(y, 2.0);
            m.add_constraint("mix", e, Cmp::Ge, 7.3).unwrap();
            let mut obj = LinExpr::new();
            obj.add(x, 3.0).add(y, 1.0);
            m.set_objective(obj).unwrap();
            let first = backend.solve(&m, &SolveParams::default()).unwrap();
            for _ in 0..3 {
                let again = backend.solve(&m, &SolveParams::default()).unwrap();
                let rel = (again.objective_value - first.objective_value).abs()
                    / first.objective_value.abs().max(1.0);
                assert!(rel < 1e-9);
            }
        }
    }

    #[test]
    fn redundant_constraint_keeps_objective() {
        for backend in backends() {
            let mut m = Model::new("redundant", Sense::Minimize);
            let x = m.add_var("x", 0.0, 10.0);
            m.add_constraint("ge2", LinExpr::term(x, 1.0), Cmp::Ge, 2.0)
                .unwrap();
            m.set_objective(LinExpr::term(x, 1.0)).unwrap();
            let before = backend.solve(&m, &SolveParams::default()).unwrap();
            // Implied by x >= 2.
            m.add_constraint("ge1", LinExpr::term(x, 2.0), Cmp::Ge, 2.0)
                .unwrap();
            let after = backend.solve(&m, &SolveParams::default()).unwrap();
            assert!((before.objective_value - after.objective_value).abs() < 1e-7);
        }
    }

    #[test]
    fn normalization_drops_zero_terms() {
        let mut m = Model::new("norm", Sense::Minimize);
        let x = m.add_var("x", 0.0, 1.0);
        let y = m.add_var("y", 0.0, 1.0);
        let mut e = LinExpr::new();
        e.add(x, 1.0).add(y, 2.0).add(x, -1.0);
        e.normalize();
        assert_eq!(e.terms().len(), 1);
        assert_eq!(e.terms()[0].0, y);
    }
}
