//! Deliberately naive reference implementations for certifying the fast
//! paths in `teq`: exhaustive enumeration in place of closed-form
//! imputations, knapsack programs, and streaming null construction.
//!
//! Everything here is exponential-time and lives in its own crate so that no
//! production binary can link it by accident. Oracles reuse `teq`'s rank and
//! transform arithmetic (certification targets the optimization logic, and
//! exact equality requires identical arithmetic on the transformed ranks) but
//! none of its optimizers or enumeration machinery.

use teq::cre;
use teq::error::{Error, Result};
use teq::nulldist::{DesignSpec, NullDistribution};
use teq::ranks::RankTransform;

/// One oracle-vs-production comparison, kept for reporting.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub case_id: String,
    pub production: f64,
    pub oracle: f64,
    pub context: String,
}

impl OracleReport {
    /// Exact-mode comparisons must agree bit for bit.
    pub fn equal(&self) -> bool {
        self.production == self.oracle
            || (self.production.is_nan() && self.oracle.is_nan())
    }
}

/// All subsets (of any size up to `max_size`) of `items`.
fn subsets_up_to(items: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &item in items {
        let mut grown: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max_size)
            .map(|s| {
                let mut t = s.clone();
                t.push(item);
                t
            })
            .collect();
        out.append(&mut grown);
    }
    out
}

/// Brute-force infimum of the rank sum statistic over the null constraint
/// set: enumerate every hypothesized-effect configuration that gives at most
/// `n1 - k` treated units an infinite effect (the rest `c`) and take the
/// minimum statistic.
pub fn brute_infimum_cre(
    z: &[bool],
    y: &[f64],
    k: usize,
    c: f64,
    transform: &RankTransform,
) -> Result<f64> {
    brute_infimum_multi(z, y, k, c, std::slice::from_ref(transform), |stats| stats[0])
}

/// Brute-force infimum of an arbitrary combination of rank sum statistics:
/// `combine` maps the per-transform statistic values at a configuration to
/// the combined statistic whose minimum is sought.
pub fn brute_infimum_multi(
    z: &[bool],
    y: &[f64],
    k: usize,
    c: f64,
    transforms: &[RankTransform],
    combine: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    let treated: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
    let n1 = treated.len();
    if n1 > 12 {
        return Err(Error::Invalid(format!(
            "oracle subset enumeration capped at 12 treated units, got {n1}"
        )));
    }
    if k > n1 {
        return Err(Error::InfeasibleBudget { k, max: n1 });
    }
    let mut best = f64::INFINITY;
    for subset in subsets_up_to(&treated, n1 - k) {
        let mut imputed: Vec<f64> = z
            .iter()
            .zip(y)
            .map(|(&zi, &yi)| if zi { yi - c } else { yi })
            .collect();
        for &i in &subset {
            imputed[i] = f64::NEG_INFINITY;
        }
        let stats: Vec<f64> = transforms
            .iter()
            .map(|t| cre::rank_sum_statistic(z, &imputed, t))
            .collect::<Result<_>>()?;
        let value = combine(&stats);
        if value < best {
            best = value;
        }
    }
    Ok(best)
}

/// Every allocation `(k_1..k_S)` with `0 <= k_s <= caps[s]` and total `k`.
pub fn enumerate_allocations(caps: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; caps.len()];
    fn rec(
        caps: &[usize],
        remaining: usize,
        s: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if s == caps.len() {
            if remaining == 0 {
                out.push(current.clone());
            }
            return;
        }
        for j in 0..=caps[s].min(remaining) {
            current[s] = j;
            rec(caps, remaining - j, s + 1, current, out);
        }
        current[s] = 0;
    }
    rec(caps, k, 0, &mut current, &mut out);
    out
}

/// Exhaustive minimum of an allocation objective.
pub fn brute_allocation_sre(
    caps: &[usize],
    k: usize,
    objective: impl Fn(&[usize]) -> f64,
) -> Result<f64> {
    let max: usize = caps.iter().sum();
    if k > max {
        return Err(Error::InfeasibleBudget { k, max });
    }
    let allocations = enumerate_allocations(caps, k);
    if allocations.len() > 1_000_000 {
        return Err(Error::Invalid(format!(
            "oracle allocation enumeration capped at 1e6, got {}",
            allocations.len()
        )));
    }
    Ok(allocations
        .iter()
        .map(|a| objective(a))
        .fold(f64::INFINITY, f64::min))
}

/// Exact null law by direct recursive enumeration of all assignments,
/// independent of the production combination iterator.
pub fn brute_null(
    design: &DesignSpec,
    eval: impl Fn(&[bool]) -> f64,
) -> Result<NullDistribution> {
    if design.assignment_count() > 1_000_000 {
        return Err(Error::Invalid(
            "oracle null enumeration capped at 1e6 assignments".into(),
        ));
    }
    let offsets = design.offsets();
    let mut z = vec![false; design.n()];
    let mut values = Vec::new();
    fn per_stratum(
        design: &DesignSpec,
        offsets: &[usize],
        s: usize,
        z: &mut Vec<bool>,
        eval: &impl Fn(&[bool]) -> f64,
        values: &mut Vec<f64>,
    ) {
        if s == design.strata().len() {
            values.push(eval(z));
            return;
        }
        let st = design.strata()[s];
        // choose the treated subset of stratum s by recursion over positions
        fn choose(
            design: &DesignSpec,
            offsets: &[usize],
            s: usize,
            pos: usize,
            left: usize,
            z: &mut Vec<bool>,
            eval: &impl Fn(&[bool]) -> f64,
            values: &mut Vec<f64>,
        ) {
            let st = design.strata()[s];
            if left == 0 {
                per_stratum(design, offsets, s + 1, z, eval, values);
                return;
            }
            if pos >= st.n || st.n - pos < left {
                return;
            }
            z[offsets[s] + pos] = true;
            choose(design, offsets, s, pos + 1, left - 1, z, eval, values);
            z[offsets[s] + pos] = false;
            choose(design, offsets, s, pos + 1, left, z, eval, values);
        }
        choose(design, offsets, s, 0, st.n1, z, eval, values);
    }
    per_stratum(design, &offsets, 0, &mut z, &eval, &mut values);
    Ok(NullDistribution::from_values(values, false))
}
