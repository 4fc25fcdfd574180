//! Exact multiple-choice knapsack by dynamic programming.
//!
//! Choose one option `j_s` in `0..=cap_s` per stratum with `sum_s j_s = k`,
//! minimizing the separable objective `sum_s values[s][j_s]`. Runs in
//! `O(S * k * max cap)` time. Ties resolve to the smallest option index of the
//! earliest stratum, so results are deterministic.

use crate::error::{Error, Result};

/// Minimize `sum_s values[s][j_s]` subject to `sum_s j_s = k`.
///
/// `values[s]` holds the per-option cost for options `0..=cap_s` (its length
/// is `cap_s + 1`). Returns the optimal objective and one optimal choice
/// vector.
pub fn allocate_dp(values: &[Vec<f64>], k: usize) -> Result<(f64, Vec<usize>)> {
    if values.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let caps: Vec<usize> = values.iter().map(|v| v.len() - 1).collect();
    let max_budget: usize = caps.iter().sum();
    if k > max_budget {
        return Err(Error::InfeasibleBudget { k, max: max_budget });
    }

    let s_count = values.len();
    // suffix capacities for feasibility pruning
    let mut suffix_cap = vec![0usize; s_count + 1];
    for s in (0..s_count).rev() {
        suffix_cap[s] = suffix_cap[s + 1] + caps[s];
    }

    const UNSET: usize = usize::MAX;
    let mut dp = vec![f64::INFINITY; k + 1];
    let mut choice = vec![vec![UNSET; k + 1]; s_count];
    dp[0] = 0.0;

    for s in 0..s_count {
        let mut next = vec![f64::INFINITY; k + 1];
        for b in 0..=k {
            if dp[b].is_infinite() {
                continue;
            }
            // budgets that cannot be completed by later strata are dead ends
            let hi = caps[s].min(k - b);
            for j in 0..=hi {
                let nb = b + j;
                if k - nb > suffix_cap[s + 1] {
                    continue;
                }
                let cand = dp[b] + values[s][j];
                if cand < next[nb] {
                    next[nb] = cand;
                    choice[s][nb] = j;
                }
            }
        }
        dp = next;
    }

    let objective = dp[k];
    if objective.is_infinite() {
        return Err(Error::InfeasibleBudget { k, max: max_budget });
    }
    let mut allocation = vec![0usize; s_count];
    let mut b = k;
    for s in (0..s_count).rev() {
        let j = choice[s][b];
        debug_assert_ne!(j, UNSET);
        allocation[s] = j;
        b -= j;
    }
    Ok((objective, allocation))
}
