//! General-form linear programs and a deterministic bounded-variable
//! revised simplex solver.
//!
//! Problems are `min cᵀx + offset` subject to `l ≤ x ≤ u` and rows
//! `aᵢᵀx {≤, =, ≥} bᵢ`. Row duals are reported as `∂objective/∂bᵢ`.

mod simplex;

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

/// Primal feasibility tolerance (row residual after row-norm scaling).
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Reduced-cost tolerance used for optimality.
pub const OPTIMALITY_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `activity` violates the row (0 when satisfied).
    pub fn violation(&self, activity: f64) -> f64 {
        match self.relation {
            Relation::Le => (activity - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - activity).max(0.0),
            Relation::Eq => (activity - self.rhs).abs(),
        }
    }

    fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, &(_, a)| m.max(a.abs()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    /// Constant added to the reported objective.
    pub objective_offset: f64,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.rows.push(Row {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self, values: &[f64]) -> f64 {
        self.objective_offset
            + self
                .vars
                .iter()
                .zip(values)
                .map(|(v, x)| v.cost * x)
                .sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() {
                return Err(LpError::MalformedProblem(format!(
                    "variable {} has non-numeric data",
                    v.name
                )));
            }
            if v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::MalformedProblem(format!(
                    "variable {} has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(LpError::MalformedProblem(format!("row {} has rhs {}", r.name, r.rhs)));
            }
            for &(v, a) in &r.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(LpError::MalformedProblem(format!(
                        "row {} references undeclared variable #{}",
                        r.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::MalformedProblem(format!(
                        "row {} has coefficient {a} on {}",
                        r.name, self.vars[v.0].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump, one declaration per line:
    ///
    /// ```text
    /// offset <value>
    /// var <name> <lower> <upper> <cost>
    /// row <name> <<=|=|>=> <rhs> <var>:<coef> ...
    /// ```
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "offset {}", self.objective_offset);
        for v in &self.vars {
            let _ = writeln!(out, "var {} {} {} {}", v.name, v.lower, v.upper, v.cost);
        }
        for r in &self.rows {
            let _ = write!(out, "row {} {} {}", r.name, r.relation.as_str(), r.rhs);
            for &(v, a) in &r.coeffs {
                let _ = write!(out, " {}:{}", self.vars[v.0].name, a);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Row multipliers `∂objective/∂rhs`; empty unless optimal.
    pub duals: Vec<f64>,
    /// Largest row or bound violation after row-norm scaling.
    pub max_primal_residual: f64,
    /// Phase-one residual (sum of artificial levels, unscaled); zero when feasible.
    pub infeasibility: f64,
    /// Improving direction when unbounded: a variable index, or
    /// `num_vars + row` for the slack of a row.
    pub unbounded_ray: Option<usize>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }
}

/// Solves `lp` to optimality, infeasibility or unboundedness.
///
/// Deterministic for identical input.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut sol = simplex::solve(lp)?;
    sol.max_primal_residual = primal_residual(lp, &sol.values);
    Ok(sol)
}

fn primal_residual(lp: &LinearProgram, values: &[f64]) -> f64 {
    let report = check_solution(lp, values, &[], FEASIBILITY_TOL);
    report.max_bound_violation.max(report.max_row_violation)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max_bound_violation: f64,
    /// Row violations divided by the row's largest absolute coefficient.
    pub max_row_violation: f64,
    /// Largest |multiplier × slack| over rows and variable bounds; zero when
    /// no duals are supplied.
    pub complementary_slackness_gap: f64,
    pub objective: f64,
    pub within_tolerance: bool,
}

/// Residuals of a candidate point (and optional duals) against `lp`.
pub fn check_solution(lp: &LinearProgram, values: &[f64], duals: &[f64], tol: f64) -> ResidualReport {
    let mut bound = 0.0f64;
    for (v, &x) in lp.vars.iter().zip(values) {
        bound = bound.max(v.lower - x).max(x - v.upper);
    }
    let mut row_viol = 0.0f64;
    let mut cs = 0.0f64;
    let mut activities = Vec::with_capacity(lp.rows.len());
    for r in &lp.rows {
        let act = r.activity(values);
        activities.push(act);
        let scale = r.norm_inf();
        let viol = r.violation(act);
        row_viol = row_viol.max(if scale > 0.0 { viol / scale } else { viol });
    }
    if duals.len() == lp.rows.len() {
        for ((r, &act), &y) in lp.rows.iter().zip(&activities).zip(duals) {
            cs = cs.max((y * (act - r.rhs)).abs());
        }
        // reduced costs against variable bounds
        let mut reduced: Vec<f64> = lp.vars.iter().map(|v| v.cost).collect();
        for (r, &y) in lp.rows.iter().zip(duals) {
            for &(v, a) in &r.coeffs {
                reduced[v.0] -= y * a;
            }
        }
        for ((v, &x), &d) in lp.vars.iter().zip(values).zip(&reduced) {
            let gap = if d > 0.0 {
                d * (x - v.lower)
            } else if d < 0.0 {
                -d * (v.upper - x)
            } else {
                0.0
            };
            cs = cs.max(gap.abs());
        }
    }
    let bound = bound.max(0.0);
    ResidualReport {
        max_bound_violation: bound,
        max_row_violation: row_viol,
        complementary_slackness_gap: cs,
        objective: lp.objective(values),
        within_tolerance: bound <= tol && row_viol <= tol,
    }
}
