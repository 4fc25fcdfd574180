//! Dense two-phase primal simplex for the small linear programs used by the
//! allocation optimizer.
//!
//! Problems here have a handful of equality rows (one per stratum plus the
//! budget row) and one epigraph row per combined statistic, with at most a
//! few thousand variables, so a dense tableau with Bland's anti-cycling rule
//! is plenty. Tolerance on reduced costs and pivots is 1e-9.

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOp {
    Le,
    Eq,
}

/// `minimize c'x  subject to  A x (<= | =) b,  x >= 0`.
#[derive(Debug, Clone)]
pub struct Lp {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, RowOp, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
}

struct Tableau {
    /// m x (total + 1) matrix; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_structural: usize,
    n_artificial_start: usize,
    total: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.total]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= piv;
        }
        for i in 0..self.t.len() {
            if i != row {
                let factor = self.t[i][col];
                if factor != 0.0 {
                    for j in 0..=self.total {
                        let delta = factor * self.t[row][j];
                        self.t[i][j] -= delta;
                    }
                }
            }
        }
        self.basis[row] = col;
    }

    /// Run the simplex on the given cost vector with Bland's rule.
    /// `allow` filters the columns that may enter.
    fn optimize(&mut self, cost: &[f64], allow: &dyn Fn(usize) -> bool) -> Result<()> {
        let m = self.t.len();
        let max_iter = 50_000 + 50 * (m + self.total);
        for _ in 0..max_iter {
            // reduced costs r_j = c_j - c_B B^-1 A_j; recomputed densely,
            // which is cheap at these sizes and immune to drift
            let mut entering = None;
            for j in 0..self.total {
                if !allow(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..m {
                    let cb = cost[self.basis[i]];
                    if cb != 0.0 {
                        r -= cb * self.t[i][j];
                    }
                }
                if r < -TOL {
                    entering = Some(j);
                    break; // Bland: first (lowest-index) improving column
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][col];
                if a > TOL {
                    let ratio = self.rhs(i) / a;
                    let better = match leaving {
                        None => true,
                        Some((best_i, best)) => {
                            ratio < best - TOL
                                || (ratio <= best + TOL && self.basis[i] < self.basis[best_i])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Err(Error::LinearProgram("unbounded".into()));
            };
            self.pivot(row, col);
        }
        Err(Error::LinearProgram("iteration limit".into()))
    }
}

/// Solve the LP; errors on infeasible or unbounded problems.
pub fn solve(lp: &Lp) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.rows.len();
    for (coeffs, _, _) in &lp.rows {
        if coeffs.len() != n {
            return Err(Error::LengthMismatch(coeffs.len(), n));
        }
    }

    // Count slack columns; every row also gets an artificial so that the
    // initial basis is trivially feasible in phase 1. A <= row with
    // nonnegative rhs keeps its slack basic instead of the artificial.
    let n_slack = lp.rows.iter().filter(|(_, op, _)| *op == RowOp::Le).count();
    let n_art_start = n + n_slack;
    let total = n_art_start + m;

    let mut t = vec![vec![0.0; total + 1]; m];
    let mut basis = vec![0usize; m];
    let mut slack_idx = 0;
    for (i, (coeffs, op, rhs)) in lp.rows.iter().enumerate() {
        let flip = *rhs < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        for (j, &a) in coeffs.iter().enumerate() {
            t[i][j] = sign * a;
        }
        t[i][total] = sign * rhs;
        match op {
            RowOp::Le => {
                // flipped <= becomes >=: the slack enters with -1
                t[i][n + slack_idx] = sign;
                if !flip {
                    basis[i] = n + slack_idx;
                } else {
                    t[i][n_art_start + i] = 1.0;
                    basis[i] = n_art_start + i;
                }
                slack_idx += 1;
            }
            RowOp::Eq => {
                t[i][n_art_start + i] = 1.0;
                basis[i] = n_art_start + i;
            }
        }
    }

    let mut tab = Tableau {
        t,
        basis,
        n_structural: n,
        n_artificial_start: n_art_start,
        total,
    };

    // Phase 1: minimize the sum of artificials.
    let mut phase1_cost = vec![0.0; total];
    for j in n_art_start..total {
        phase1_cost[j] = 1.0;
    }
    if tab.basis.iter().any(|&b| b >= n_art_start) {
        tab.optimize(&phase1_cost, &|_| true)?;
        let infeasibility: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n_art_start)
            .map(|i| tab.rhs(i))
            .sum();
        if infeasibility > 1e-7 {
            return Err(Error::LinearProgram("infeasible".into()));
        }
        // drive zero-level artificials out of the basis; a row that offers no
        // pivot is redundant and gets dropped
        let mut i = 0;
        while i < tab.t.len() {
            if tab.basis[i] >= tab.n_artificial_start {
                match (0..tab.n_artificial_start)
                    .find(|&j| tab.t[i][j].abs() > TOL && !tab.basis.contains(&j))
                {
                    Some(col) => {
                        tab.pivot(i, col);
                        i += 1;
                    }
                    None => {
                        tab.t.remove(i);
                        tab.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }

    // Phase 2 with the real objective; artificials may not re-enter.
    let mut phase2_cost = vec![0.0; total];
    phase2_cost[..n].copy_from_slice(&lp.objective);
    let art_start = tab.n_artificial_start;
    tab.optimize(&phase2_cost, &|j| j < art_start)?;

    let mut x = vec![0.0; n];
    for i in 0..tab.t.len() {
        if tab.basis[i] < tab.n_structural {
            x[tab.basis[i]] = tab.rhs(i);
        }
    }
    let objective = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum::<f64>();
    Ok(LpSolution { objective, x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simple_bounded_minimum() {
        // min -x - 2y s.t. x + y <= 4, x <= 3, y <= 2  ->  x=2? no: y=2, x=2
        let lp = Lp {
            objective: vec![-1.0, -2.0],
            rows: vec![
                (vec![1.0, 1.0], RowOp::Le, 4.0),
                (vec![1.0, 0.0], RowOp::Le, 3.0),
                (vec![0.0, 1.0], RowOp::Le, 2.0),
            ],
        };
        let sol = solve(&lp).unwrap();
        assert_relative_eq!(sol.objective, -6.0, max_relative = 1e-9);
        assert_relative_eq!(sol.x[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn equality_constraints() {
        // min x + y s.t. x + 2y = 3, x >= 0, y >= 0 -> y = 1.5
        let lp = Lp {
            objective: vec![1.0, 1.0],
            rows: vec![(vec![1.0, 2.0], RowOp::Eq, 3.0)],
        };
        let sol = solve(&lp).unwrap();
        assert_relative_eq!(sol.objective, 1.5, max_relative = 1e-9);
    }

    #[test]
    fn negative_rhs_le_row() {
        // min x s.t. -x <= -2  (i.e. x >= 2)
        let lp = Lp {
            objective: vec![1.0],
            rows: vec![(vec![-1.0], RowOp::Le, -2.0)],
        };
        let sol = solve(&lp).unwrap();
        assert_relative_eq!(sol.objective, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let lp = Lp {
            objective: vec![1.0],
            rows: vec![
                (vec![1.0], RowOp::Le, 1.0),
                (vec![-1.0], RowOp::Le, -2.0), // x >= 2 contradicts x <= 1
            ],
        };
        assert!(matches!(solve(&lp), Err(Error::LinearProgram(_))));
    }

    #[test]
    fn unbounded_detected() {
        let lp = Lp {
            objective: vec![-1.0],
            rows: vec![(vec![0.0], RowOp::Le, 1.0)],
        };
        assert!(matches!(solve(&lp), Err(Error::LinearProgram(_))));
    }

    #[test]
    fn free_variable_via_split() {
        // min t (= u - v) s.t. t >= -5 expressed as -u + v <= 5
        let lp = Lp {
            objective: vec![1.0, -1.0],
            rows: vec![(vec![-1.0, 1.0], RowOp::Le, 5.0)],
        };
        let sol = solve(&lp).unwrap();
        assert_relative_eq!(sol.objective, -5.0, max_relative = 1e-9);
    }
}
