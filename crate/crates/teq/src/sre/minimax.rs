//! Optimization of the max-standardized combined statistic over allocations.
//!
//! The worst-case value of `max_h (sum_s w_h[s] t_s_h(j_s) - mu_h) / sigma_h`
//! over allocations `sum_s j_s = k` is an integer program: pick one option per
//! stratum, minimize the epigraph variable. Exact solutions come from brute
//! force on small instances or depth-first branch-and-bound with
//! LP-relaxation lower bounds; relaxing the integrality gives a cheaper lower
//! bound on the optimum, hence a conservative (larger, still valid) p-value.

use crate::error::{Error, Result};
use crate::sre::simplex::{self, Lp, RowOp};

/// Allocation-count threshold below which exact mode just enumerates.
pub const BRUTE_FORCE_CAP: u128 = 100_000;

/// Margin subtracted from incumbent comparisons so float noise in LP bounds
/// can never prune a subtree holding the true optimum.
const PRUNE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exactness {
    Exact,
    ConservativeLowerBound,
}

#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub objective: f64,
    pub allocation: Vec<usize>,
    pub exactness: Exactness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    /// Brute force below [`BRUTE_FORCE_CAP`], branch-and-bound above.
    Exact,
    BruteForce,
    LpRelaxation,
}

/// The minimax allocation instance.
///
/// `table[s][j][h]` is the infimum of the h-th stratum statistic with
/// option `j` in stratum `s`; `weights[h][s]`, `mu[h]`, `sigma[h]` are the
/// per-statistic weights and standardization constants.
pub struct MinimaxInstance<'a> {
    pub table: &'a [Vec<Vec<f64>>],
    pub weights: &'a [Vec<f64>],
    pub mu: &'a [f64],
    pub sigma: &'a [f64],
}

impl MinimaxInstance<'_> {
    fn s_count(&self) -> usize {
        self.table.len()
    }

    fn h_count(&self) -> usize {
        self.mu.len()
    }

    fn caps(&self) -> Vec<usize> {
        self.table.iter().map(|rows| rows.len() - 1).collect()
    }

    /// Weighted contribution of option `j` in stratum `s` to statistic `h`.
    fn term(&self, h: usize, s: usize, j: usize) -> f64 {
        self.weights[h][s] * self.table[s][j][h]
    }

    /// Objective of a complete allocation; per-statistic sums accumulate in
    /// stratum order so values are bit-identical across solver paths.
    pub fn objective(&self, allocation: &[usize]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for h in 0..self.h_count() {
            let mut acc = 0.0;
            for (s, &j) in allocation.iter().enumerate() {
                acc += self.term(h, s, j);
            }
            let v = (acc - self.mu[h]) / self.sigma[h];
            if v > best {
                best = v;
            }
        }
        best
    }

    fn allocation_count(&self) -> u128 {
        self.caps()
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128 + 1))
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.table.is_empty() || self.h_count() == 0 {
            return Err(Error::EmptyGroup);
        }
        if self.sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::DegenerateStatistic);
        }
        let max: usize = self.caps().iter().sum();
        if k > max {
            return Err(Error::InfeasibleBudget { k, max });
        }
        Ok(())
    }
}

/// Minimize the combined statistic over allocations with total budget `k`.
pub fn allocate_minimax(
    inst: &MinimaxInstance<'_>,
    k: usize,
    mode: SolverMode,
) -> Result<AllocationResult> {
    inst.validate(k)?;
    match mode {
        SolverMode::BruteForce => brute_force(inst, k),
        SolverMode::Exact => {
            if inst.allocation_count() <= BRUTE_FORCE_CAP {
                brute_force(inst, k)
            } else {
                branch_and_bound(inst, k)
            }
        }
        SolverMode::LpRelaxation => lp_relaxation(inst, k),
    }
}

fn brute_force(inst: &MinimaxInstance<'_>, k: usize) -> Result<AllocationResult> {
    let caps = inst.caps();
    let mut suffix = vec![0usize; caps.len() + 1];
    for s in (0..caps.len()).rev() {
        suffix[s] = suffix[s + 1] + caps[s];
    }
    let mut alloc = vec![0usize; caps.len()];
    let mut best = f64::INFINITY;
    let mut best_alloc = None;
    enumerate(inst, &caps, &suffix, k, 0, &mut alloc, &mut |a, value| {
        if value < best {
            best = value;
            best_alloc = Some(a.to_vec());
        }
    });
    Ok(AllocationResult {
        objective: best,
        allocation: best_alloc.expect("feasible instance has at least one allocation"),
        exactness: Exactness::Exact,
    })
}

fn enumerate(
    inst: &MinimaxInstance<'_>,
    caps: &[usize],
    suffix: &[usize],
    remaining: usize,
    s: usize,
    alloc: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize], f64),
) {
    if s == caps.len() {
        if remaining == 0 {
            visit(alloc, inst.objective(alloc));
        }
        return;
    }
    let lo = remaining.saturating_sub(suffix[s + 1]);
    let hi = caps[s].min(remaining);
    for j in lo..=hi {
        alloc[s] = j;
        enumerate(inst, caps, suffix, remaining - j, s + 1, alloc, visit);
    }
    alloc[s] = 0;
}

/// LP for the subproblem with strata `0..from` fixed (their per-statistic
/// contributions already in `partial`) and budget `budget` left for the rest.
fn build_lp(inst: &MinimaxInstance<'_>, from: usize, partial: &[f64], budget: usize) -> Lp {
    let caps = inst.caps();
    let free: Vec<usize> = (from..inst.s_count()).collect();
    let n_x: usize = free.iter().map(|&s| caps[s] + 1).sum();
    // variables: x_{sj} for free strata, then t+ and t-
    let n = n_x + 2;
    let mut objective = vec![0.0; n];
    objective[n_x] = 1.0;
    objective[n_x + 1] = -1.0;

    let col_of = |s_pos: usize, j: usize, caps: &[usize], free: &[usize]| -> usize {
        let mut off = 0;
        for &s in free.iter().take(s_pos) {
            off += caps[s] + 1;
        }
        off + j
    };

    let mut rows = Vec::new();
    // epigraph rows: sum w t x - sigma t+ + sigma t- <= mu - partial
    for h in 0..inst.h_count() {
        let mut coeffs = vec![0.0; n];
        for (s_pos, &s) in free.iter().enumerate() {
            for j in 0..=caps[s] {
                coeffs[col_of(s_pos, j, &caps, &free)] = inst.term(h, s, j);
            }
        }
        coeffs[n_x] = -inst.sigma[h];
        coeffs[n_x + 1] = inst.sigma[h];
        rows.push((coeffs, RowOp::Le, inst.mu[h] - partial[h]));
    }
    // one option per stratum
    for (s_pos, &s) in free.iter().enumerate() {
        let mut coeffs = vec![0.0; n];
        for j in 0..=caps[s] {
            coeffs[col_of(s_pos, j, &caps, &free)] = 1.0;
        }
        rows.push((coeffs, RowOp::Eq, 1.0));
    }
    // budget row
    let mut coeffs = vec![0.0; n];
    for (s_pos, &s) in free.iter().enumerate() {
        for j in 0..=caps[s] {
            coeffs[col_of(s_pos, j, &caps, &free)] = j as f64;
        }
    }
    rows.push((coeffs, RowOp::Eq, budget as f64));

    Lp { objective, rows }
}

fn lp_relaxation(inst: &MinimaxInstance<'_>, k: usize) -> Result<AllocationResult> {
    let partial = vec![0.0; inst.h_count()];
    let sol = simplex::solve(&build_lp(inst, 0, &partial, k))?;
    Ok(AllocationResult {
        objective: sol.objective,
        allocation: round_fractional(inst, &sol.x, k),
        exactness: Exactness::ConservativeLowerBound,
    })
}

/// Deterministic feasible rounding of a fractional solution: per stratum take
/// the expected option, then repair the budget greedily.
fn round_fractional(inst: &MinimaxInstance<'_>, x: &[f64], k: usize) -> Vec<usize> {
    let caps = inst.caps();
    let mut alloc = Vec::with_capacity(caps.len());
    let mut off = 0;
    for &cap in &caps {
        let expected: f64 = (0..=cap).map(|j| j as f64 * x[off + j]).sum();
        alloc.push((expected.round().max(0.0) as usize).min(cap));
        off += cap + 1;
    }
    let mut total: usize = alloc.iter().sum();
    let mut s = 0;
    while total != k {
        if total < k && alloc[s] < caps[s] {
            alloc[s] += 1;
            total += 1;
        } else if total > k && alloc[s] > 0 {
            alloc[s] -= 1;
            total -= 1;
        } else {
            s = (s + 1) % alloc.len();
            continue;
        }
    }
    alloc
}

fn branch_and_bound(inst: &MinimaxInstance<'_>, k: usize) -> Result<AllocationResult> {
    let caps = inst.caps();
    let mut suffix = vec![0usize; caps.len() + 1];
    for s in (0..caps.len()).rev() {
        suffix[s] = suffix[s + 1] + caps[s];
    }

    // warm-start the incumbent with the deterministic rounding of the root LP
    let root = simplex::solve(&build_lp(inst, 0, &vec![0.0; inst.h_count()], k))?;
    let seed_alloc = round_fractional(inst, &root.x, k);
    let mut best = inst.objective(&seed_alloc);
    let mut best_alloc = seed_alloc;

    struct Dfs<'p, 'a> {
        inst: &'p MinimaxInstance<'a>,
        caps: Vec<usize>,
        suffix: Vec<usize>,
        best: f64,
        best_alloc: Vec<usize>,
        alloc: Vec<usize>,
    }

    impl Dfs<'_, '_> {
        fn run(&mut self, s: usize, remaining: usize, partial: &[f64]) -> Result<()> {
            if s == self.caps.len() {
                debug_assert_eq!(remaining, 0);
                let value = self.inst.objective(&self.alloc);
                if value < self.best {
                    self.best = value;
                    self.best_alloc = self.alloc.clone();
                }
                return Ok(());
            }
            // subtree small enough: enumerate without LP overhead
            let subtree: u128 = self.caps[s..]
                .iter()
                .fold(1u128, |acc, &c| acc.saturating_mul(c as u128 + 1));
            if subtree <= 4096 {
                let mut local = self.alloc.clone();
                let mut best = self.best;
                let mut best_alloc: Option<Vec<usize>> = None;
                enumerate(
                    self.inst,
                    &self.caps,
                    &self.suffix,
                    remaining,
                    s,
                    &mut local,
                    &mut |a, value| {
                        if value < best {
                            best = value;
                            best_alloc = Some(a.to_vec());
                        }
                    },
                );
                if let Some(a) = best_alloc {
                    self.best = best;
                    self.best_alloc = a;
                }
                return Ok(());
            }
            let bound = simplex::solve(&build_lp(self.inst, s, partial, remaining))?.objective;
            if bound >= self.best - PRUNE_MARGIN {
                return Ok(());
            }
            let lo = remaining.saturating_sub(self.suffix[s + 1]);
            let hi = self.caps[s].min(remaining);
            for j in lo..=hi {
                self.alloc[s] = j;
                let next: Vec<f64> = partial
                    .iter()
                    .enumerate()
                    .map(|(h, &p)| p + self.inst.term(h, s, j))
                    .collect();
                self.run(s + 1, remaining - j, &next)?;
            }
            self.alloc[s] = 0;
            Ok(())
        }
    }

    let mut dfs = Dfs {
        inst,
        caps: caps.clone(),
        suffix,
        best,
        best_alloc: best_alloc.clone(),
        alloc: vec![0usize; caps.len()],
    };
    dfs.run(0, k, &vec![0.0; inst.h_count()])?;
    best = dfs.best;
    best_alloc = dfs.best_alloc;

    Ok(AllocationResult {
        objective: best,
        allocation: best_alloc,
        exactness: Exactness::Exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sre::knapsack::allocate_dp;

    /// A small deterministic instance.
    fn toy_instance() -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        // 2 strata, caps 2 and 3; H = 2
        let table = vec![
            vec![vec![0.1, 0.0], vec![0.4, 0.2], vec![0.9, 0.7]],
            vec![
                vec![0.0, 0.1],
                vec![0.2, 0.15],
                vec![0.5, 0.4],
                vec![0.8, 0.9],
            ],
        ];
        let weights = vec![vec![2.0, 3.0], vec![1.0, 4.0]];
        let mu = vec![1.0, 0.8];
        let sigma = vec![0.5, 0.9];
        (table, weights, mu, sigma)
    }

    #[test]
    fn brute_force_matches_exhaustive_oracle() {
        let (table, weights, mu, sigma) = toy_instance();
        let inst = MinimaxInstance {
            table: &table,
            weights: &weights,
            mu: &mu,
            sigma: &sigma,
        };
        for k in 0..=5 {
            let res = allocate_minimax(&inst, k, SolverMode::BruteForce).unwrap();
            // independent double loop
            let mut best = f64::INFINITY;
            for a in 0..=2usize {
                for b in 0..=3usize {
                    if a + b == k {
                        best = best.min(inst.objective(&[a, b]));
                    }
                }
            }
            assert_eq!(res.objective, best, "k={k}");
            assert_eq!(res.allocation.iter().sum::<usize>(), k);
        }
    }

    #[test]
    fn single_statistic_agrees_with_dp() {
        let (table, _, _, _) = toy_instance();
        let weights = vec![vec![2.0, 3.0]];
        let mu = vec![0.0];
        let sigma = vec![1.0];
        let inst = MinimaxInstance {
            table: &table,
            weights: &weights,
            mu: &mu,
            sigma: &sigma,
        };
        for k in 0..=5 {
            let mm = allocate_minimax(&inst, k, SolverMode::BruteForce).unwrap();
            let values: Vec<Vec<f64>> = table
                .iter()
                .enumerate()
                .map(|(s, rows)| rows.iter().map(|r| weights[0][s] * r[0]).collect())
                .collect();
            let (dp_obj, _) = allocate_dp(&values, k).unwrap();
            assert!((mm.objective - dp_obj).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn lp_relaxation_never_exceeds_exact() {
        let (table, weights, mu, sigma) = toy_instance();
        let inst = MinimaxInstance {
            table: &table,
            weights: &weights,
            mu: &mu,
            sigma: &sigma,
        };
        for k in 0..=5 {
            let exact = allocate_minimax(&inst, k, SolverMode::Exact).unwrap();
            let lp = allocate_minimax(&inst, k, SolverMode::LpRelaxation).unwrap();
            assert!(
                lp.objective <= exact.objective + 1e-9,
                "k={k}: {} vs {}",
                lp.objective,
                exact.objective
            );
            assert_eq!(lp.exactness, Exactness::ConservativeLowerBound);
            assert_eq!(lp.allocation.iter().sum::<usize>(), k);
        }
    }

    #[test]
    fn degenerate_sigma_rejected() {
        let (table, weights, mu, _) = toy_instance();
        let sigma = vec![0.5, 0.0];
        let inst = MinimaxInstance {
            table: &table,
            weights: &weights,
            mu: &mu,
            sigma: &sigma,
        };
        assert!(matches!(
            allocate_minimax(&inst, 1, SolverMode::Exact),
            Err(Error::DegenerateStatistic)
        ));
    }

    #[test]
    fn infeasible_budget_rejected() {
        let (table, weights, mu, sigma) = toy_instance();
        let inst = MinimaxInstance {
            table: &table,
            weights: &weights,
            mu: &mu,
            sigma: &sigma,
        };
        assert!(matches!(
            allocate_minimax(&inst, 6, SolverMode::Exact),
            Err(Error::InfeasibleBudget { .. })
        ));
    }
}
