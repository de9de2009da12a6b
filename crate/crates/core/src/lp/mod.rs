//! Dense bounded-variable simplex and a small branch-and-bound on top of it.
//!
//! Duals follow the sensitivity convention: `duals[i]` is the rate of change
//! of the optimal objective per unit increase of `rows[i].rhs`, whatever the
//! objective sense.

mod mip;
mod simplex;

use serde::{Deserialize, Serialize};

pub use mip::{lp_relaxation, solve_mip, solve_mip_with, MipOptions, MipProblem, MipSolution};
pub use simplex::solve_lp;

pub const TOL_FEAS: f64 = 1e-7;
pub const TOL_GAP: f64 = 1e-7;
pub const TOL_MIP: f64 = 1e-4;
pub const INF: f64 = f64::INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct LpProblem {
    pub sense: Sense,
    pub cost: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub rows: Vec<Row>,
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        LpProblem { sense, cost: Vec::new(), bounds: Vec::new(), rows: Vec::new() }
    }

    pub fn minimize() -> Self {
        Self::new(Sense::Minimize)
    }

    pub fn add_column(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.bounds.push((lower, upper));
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.rows.push(Row { coefs, relation, rhs });
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> crate::Result<()> {
        let n = self.num_cols();
        if self.bounds.len() != n {
            return Err(crate::Error::DimensionMismatch(format!(
                "{} costs but {} column bounds",
                n,
                self.bounds.len()
            )));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo > hi || lo.is_nan() || hi.is_nan() || lo == INF || hi == -INF {
                return Err(crate::Error::DimensionMismatch(format!(
                    "column {j} has bounds [{lo}, {hi}]"
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(&(j, _)) = row.coefs.iter().find(|&&(j, _)| j >= n) {
                return Err(crate::Error::DimensionMismatch(format!(
                    "row {i} references column {j} of {n}"
                )));
            }
            if !row.rhs.is_finite() {
                return Err(crate::Error::DimensionMismatch(format!("row {i} rhs is not finite")));
            }
        }
        Ok(())
    }

    pub fn row_activity(&self, x: &[f64], i: usize) -> f64 {
        self.rows[i].coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or column bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            worst = worst.max(lo - x[j]).max(x[j] - hi);
        }
        for (i, row) in self.rows.iter().enumerate() {
            let act = self.row_activity(x, i);
            let v = match row.relation {
                Relation::Le => act - row.rhs,
                Relation::Ge => row.rhs - act,
                Relation::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// bᵀy plus the bound terms of nonbasic columns; equals the objective at optimality.
    pub fn dual_objective(&self, p: &LpProblem) -> f64 {
        let mut v: f64 = p.rows.iter().zip(&self.duals).map(|(r, y)| r.rhs * y).sum();
        for (j, &d) in self.reduced_costs.iter().enumerate() {
            if d != 0.0 {
                let (lo, hi) = p.bounds[j];
                let x = self.primal[j];
                let at = if lo.is_finite() && (x - lo).abs() <= (x - hi).abs() {
                    lo
                } else if hi.is_finite() {
                    hi
                } else {
                    x
                };
                v += d * at;
            }
        }
        v
    }
}
