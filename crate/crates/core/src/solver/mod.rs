//! Canonical LP/MILP representation with an embedded simplex solver and a
//! branch-and-bound layer.
//!
//! The solver is deliberately self-contained so the whole test suite runs
//! hermetically. It is a dense two-phase primal simplex with Dantzig pricing
//! and a Bland's-rule fallback that kicks in after a run of degenerate
//! pivots; the expected-shortfall LPs built by `bidmodels` are heavily
//! degenerate and will cycle without it.

mod branch_bound;
pub mod export;
mod simplex;

use thiserror::Error;

pub use branch_bound::solve_milp;
pub use simplex::solve_lp;

/// Default feasibility tolerance.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default relative MILP optimality gap.
pub const DEFAULT_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// One linear constraint row with sparse coefficients.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program over `num_vars` continuous variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub sense: Sense,
    /// Sparse objective coefficients; absent indices have coefficient 0.
    pub objective: Vec<(usize, f64)>,
    /// Per-variable `[lower, upper]`; infinities allowed.
    pub bounds: Vec<(f64, f64)>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            num_vars: 0,
            sense,
            objective: Vec::new(),
            bounds: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// Adds a variable and returns its column index.
    pub fn add_var(&mut self, lower: f64, upper: f64, obj_coeff: f64) -> usize {
        let idx = self.num_vars;
        self.num_vars += 1;
        self.bounds.push((lower, upper));
        if obj_coeff != 0.0 {
            self.objective.push((idx, obj_coeff));
        }
        idx
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    /// Checks representation invariants: finite coefficients, valid indices,
    /// consistent bounds.
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.bounds.len() != self.num_vars {
            return Err(SolverError::Malformed("bounds length != num_vars".into()));
        }
        for (j, &(l, u)) in self.bounds.iter().enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(SolverError::Malformed(format!(
                    "variable {j} has invalid bounds [{l}, {u}]"
                )));
            }
        }
        for (j, c) in self.objective.iter() {
            if *j >= self.num_vars || !c.is_finite() {
                return Err(SolverError::Malformed(format!(
                    "objective entry ({j}, {c}) invalid"
                )));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(SolverError::Malformed(format!("row {i} has non-finite rhs")));
            }
            for (j, c) in &row.coeffs {
                if *j >= self.num_vars || !c.is_finite() {
                    return Err(SolverError::Malformed(format!(
                        "row {i} entry ({j}, {c}) invalid"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Objective value of a primal point under the original objective.
    pub fn objective_value(&self, primal: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * primal[j]).sum()
    }

    /// Maximum constraint/bound violation of a primal point.
    pub fn max_violation(&self, primal: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &(l, u)) in self.bounds.iter().enumerate() {
            worst = worst.max(l - primal[j]).max(primal[j] - u);
        }
        for row in &self.constraints {
            let lhs: f64 = row.coeffs.iter().map(|&(j, c)| c * primal[j]).sum();
            let v = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// A linear program plus a set of integer-constrained variables.
#[derive(Debug, Clone)]
pub struct MixedIntegerProgram {
    pub base: LinearProgram,
    /// Variable indices constrained to integer values within their bounds.
    pub integer_vars: Vec<usize>,
}

impl MixedIntegerProgram {
    pub fn validate(&self) -> Result<(), SolverError> {
        self.base.validate()?;
        for &j in &self.integer_vars {
            if j >= self.base.num_vars {
                return Err(SolverError::Malformed(format!(
                    "integer var index {j} out of range"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Solver result. `primal` is empty unless a point is available.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective_value: f64,
    pub primal: Vec<f64>,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Malformed(String),
}
