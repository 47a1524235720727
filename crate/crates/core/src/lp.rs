//! Thin wrapper over `microlp` for the small LPs used by polytope processing.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{CnetError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Maximizes `c'x` over `{x : Gx <= h, Ex = f, lo <= x <= hi}`.
///
/// `None` bounds mean the variable is free on that side.
pub struct LinearProgram<'a> {
    pub objective: &'a [f64],
    pub ineq: &'a [Vec<f64>],
    pub ineq_rhs: &'a [f64],
    pub eq: &'a [Vec<f64>],
    pub eq_rhs: &'a [f64],
    pub lower: Option<&'a [f64]>,
    pub upper: Option<&'a [f64]>,
}

impl LinearProgram<'_> {
    pub fn maximize(&self) -> Result<LpOutcome> {
        let n = self.objective.len();
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..n)
            .map(|i| {
                let lo = self.lower.map_or(f64::NEG_INFINITY, |l| l[i]);
                let hi = self.upper.map_or(f64::INFINITY, |u| u[i]);
                problem.add_var(self.objective[i], (lo, hi))
            })
            .collect();
        let add = |problem: &mut Problem, row: &[f64], op: ComparisonOp, rhs: f64| {
            let terms: Vec<_> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (vars[i], *v))
                .collect();
            if terms.is_empty() {
                return rhs_consistent(op, rhs);
            }
            problem.add_constraint(terms.as_slice(), op, rhs);
            true
        };
        for (row, rhs) in self.ineq.iter().zip(self.ineq_rhs) {
            if !add(&mut problem, row, ComparisonOp::Le, *rhs) {
                return Ok(LpOutcome::Infeasible);
            }
        }
        for (row, rhs) in self.eq.iter().zip(self.eq_rhs) {
            if !add(&mut problem, row, ComparisonOp::Eq, *rhs) {
                return Ok(LpOutcome::Infeasible);
            }
        }
        match problem.solve() {
            Ok(outcome) => {
                let sol = outcome
                    .into_solution()
                    .map_err(|_| CnetError::Lp("solve interrupted".into()))?;
                let x: Vec<f64> = vars.iter().map(|v| sol.var_value(*v)).collect();
                let value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                Ok(LpOutcome::Optimal { x, value })
            }
            Err(microlp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(microlp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
            Err(e) => Err(CnetError::Lp(e.to_string())),
        }
    }
}

fn rhs_consistent(op: ComparisonOp, rhs: f64) -> bool {
    match op {
        ComparisonOp::Le => rhs >= -1e-12,
        ComparisonOp::Ge => rhs <= 1e-12,
        ComparisonOp::Eq => rhs.abs() <= 1e-12,
    }
}
