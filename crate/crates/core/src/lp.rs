//! Dense two-phase simplex solver.
//!
//! Minimizes `c . x` subject to linear equality/inequality constraints and
//! `x >= 0`. Pivoting follows Bland's rule (smallest eligible index enters;
//! ratio ties resolved toward the smallest basic variable), which prevents
//! cycling and makes the returned basis deterministic. Problem sizes here
//! are at most a few hundred rows, so a dense tableau is the simplest thing
//! that is exactly right.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min c.x  s.t.  constraints, x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub minimize: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Values of the original variables.
    pub x: Vec<f64>,
    pub objective: f64,
}

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.minimize.len();
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(Error::Shape(format!(
                "constraint {i} has {} coefficients, expected {n}",
                c.coeffs.len()
            )));
        }
    }
    let mut t = Tableau::build(lp);
    t.phase_one()?;
    t.phase_two(&lp.minimize)?;
    Ok(t.extract(n, &lp.minimize))
}

struct Tableau {
    /// Constraint rows, each `n_cols` coefficients followed by the rhs.
    rows: Vec<Vec<f64>>,
    /// Reduced costs followed by the negated objective value.
    cost: Vec<f64>,
    /// Basic variable per row.
    basis: Vec<usize>,
    /// Columns `0..n_work` may enter the basis; the rest are artificials.
    n_work: usize,
    n_cols: usize,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let n = lp.minimize.len();
        let m = lp.constraints.len();
        let n_slack = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let n_work = n + n_slack;
        let n_cols = n_work + m; // one artificial per row
        let mut rows = vec![vec![0.0; n_cols + 1]; m];
        let mut slack_idx = n;
        for (i, c) in lp.constraints.iter().enumerate() {
            rows[i][..n].copy_from_slice(&c.coeffs);
            match c.relation {
                Relation::Le => {
                    rows[i][slack_idx] = 1.0;
                    slack_idx += 1;
                }
                Relation::Ge => {
                    rows[i][slack_idx] = -1.0;
                    slack_idx += 1;
                }
                Relation::Eq => {}
            }
            rows[i][n_cols] = c.rhs;
            if rows[i][n_cols] < 0.0 {
                for v in rows[i].iter_mut() {
                    *v = -*v;
                }
            }
            rows[i][n_work + i] = 1.0;
        }
        let basis: Vec<usize> = (0..m).map(|i| n_work + i).collect();
        // Phase-1 reduced costs: minimize the sum of artificials, whose
        // basic representation makes cost_j = -sum_i a_ij for working
        // columns and -(sum b) the starting negated objective.
        let mut cost = vec![0.0; n_cols + 1];
        for row in &rows {
            for (j, v) in row.iter().enumerate() {
                if j < n_work || j == n_cols {
                    cost[j] -= v;
                }
            }
        }
        let max_pivots = 20_000 + 200 * (m + n_cols);
        Tableau {
            rows,
            cost,
            basis,
            n_work,
            n_cols,
            pivots: 0,
            max_pivots,
        }
    }

    fn phase_one(&mut self) -> Result<()> {
        self.run_pivots()?;
        let obj = -self.cost[self.n_cols];
        if obj > FEAS_TOL {
            return Err(Error::Infeasible(format!(
                "phase-1 objective {obj} exceeds tolerance"
            )));
        }
        // Pivot any artificial still sitting in the basis out, or drop its
        // row if the row has no working coefficients (redundant constraint).
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= self.n_work {
                let col = (0..self.n_work).find(|&j| self.rows[i][j].abs() > PIVOT_EPS);
                match col {
                    Some(j) => self.pivot(i, j)?,
                    None => {
                        self.rows.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        Ok(())
    }

    fn phase_two(&mut self, minimize: &[f64]) -> Result<()> {
        let n = minimize.len();
        // Rebuild reduced costs for the real objective under the current basis.
        let mut cost = vec![0.0; self.n_cols + 1];
        cost[..n].copy_from_slice(minimize);
        for (i, row) in self.rows.iter().enumerate() {
            let cb = if self.basis[i] < n {
                minimize[self.basis[i]]
            } else {
                0.0
            };
            if cb != 0.0 {
                for (j, v) in row.iter().enumerate() {
                    cost[j] -= cb * v;
                }
            }
        }
        self.cost = cost;
        self.run_pivots()
    }

    fn run_pivots(&mut self) -> Result<()> {
        loop {
            // Bland: smallest working column with a negative reduced cost.
            let entering = (0..self.n_work).find(|&j| self.cost[j] < -COST_EPS);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(f64, usize, usize)> = None; // (ratio, basis var, row)
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_EPS {
                    let ratio = row[self.n_cols] / a;
                    let better = match leaving {
                        None => true,
                        Some((best, bvar, _)) => {
                            ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[i] < bvar)
                        }
                    };
                    if better {
                        leaving = Some((ratio, self.basis[i], i));
                    }
                }
            }
            let Some((_, _, row)) = leaving else {
                return Err(Error::Infeasible(format!(
                    "objective is unbounded along column {col}"
                )));
            };
            self.pivot(row, col)?;
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > self.max_pivots {
            return Err(Error::SolverStall(format!(
                "simplex exceeded {} pivots",
                self.max_pivots
            )));
        }
        let piv = self.rows[pr][pc];
        debug_assert!(piv.abs() > PIVOT_EPS);
        for v in self.rows[pr].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[pr].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == pr {
                continue;
            }
            let factor = row[pc];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                row[pc] = 0.0;
            }
        }
        let factor = self.cost[pc];
        if factor != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            self.cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
        Ok(())
    }

    fn extract(&self, n: usize, minimize: &[f64]) -> LpSolution {
        let mut x = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rows[i][self.n_cols];
            }
        }
        let objective = x.iter().zip(minimize).map(|(a, c)| a * c).sum();
        LpSolution { x, objective }
    }
}
