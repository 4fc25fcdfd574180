//! Inference for effect quantiles under stratified randomization.
//!
//! Outcomes are ranked within each stratum, transformed on the normalized
//! scale `r / (n_s + 1)` so strata of different sizes stay comparable, and
//! aggregated with weights. Unlike the single-stratum case, the worst-case
//! hypothesized effects require choosing how many large-effect slots each
//! stratum absorbs: a multiple-choice knapsack over per-stratum infimum
//! tables. Separable objectives (a single statistic, or the per-stratum
//! combined statistic summed across strata) solve exactly by dynamic
//! programming; the max-of-standardized-statistics combination is an integer
//! program solved by branch-and-bound, with an LP relaxation as the
//! conservative fast path.

pub mod knapsack;
pub mod minimax;
pub mod simplex;

pub use minimax::{allocate_minimax, AllocationResult, Exactness, MinimaxInstance, SolverMode};

use crate::cre;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nulldist::{NullDistribution, StratumSize};
use crate::ranks::{compute_ranks, transform_moments, RankDomain, RankTransform};

/// Weights attached to per-stratum statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    /// `w_s = n_s1`: proportional to the treated count.
    Scheme1,
    /// `w_s = (n_s + 1) / n_s0`: the design-free weighting.
    Scheme2,
    Custom(Vec<f64>),
}

impl WeightScheme {
    pub fn weights(&self, sizes: &[StratumSize]) -> Result<Vec<f64>> {
        match self {
            WeightScheme::Scheme1 => Ok(sizes.iter().map(|s| s.n1 as f64).collect()),
            WeightScheme::Scheme2 => Ok(sizes
                .iter()
                .map(|s| (s.n as f64 + 1.0) / s.n0() as f64)
                .collect()),
            WeightScheme::Custom(w) => {
                if w.len() != sizes.len() {
                    return Err(Error::LengthMismatch(w.len(), sizes.len()));
                }
                if w.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::Invalid("custom weights must be >= 0".into()));
                }
                Ok(w.clone())
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            WeightScheme::Scheme1 => "scheme1",
            WeightScheme::Scheme2 => "scheme2",
            WeightScheme::Custom(_) => "custom",
        }
    }
}

/// How multiple rank statistics are combined across strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    /// One statistic; no combination.
    Single,
    /// Aggregate each statistic across strata, then take the maximum of the
    /// standardized aggregates.
    AggregateThenCombine,
    /// Standardize and combine within each stratum, then aggregate the
    /// per-stratum maxima across strata.
    CombineThenAggregate,
}

/// A stratified test statistic: transforms on normalized ranks, per-transform
/// weight schemes, and the combination rule.
#[derive(Debug, Clone)]
pub struct StratifiedSpec {
    transforms: Vec<RankTransform>,
    weights: Vec<WeightScheme>,
    combination: Combination,
}

impl StratifiedSpec {
    pub fn single(transform: RankTransform, weights: WeightScheme) -> Result<Self> {
        Self::new(vec![transform], vec![weights], Combination::Single)
    }

    /// Maximum of standardized weighted aggregates (one weight scheme per
    /// transform; pass a single scheme to share it).
    pub fn aggregate_then_combine(
        transforms: Vec<RankTransform>,
        weights: Vec<WeightScheme>,
    ) -> Result<Self> {
        Self::new(transforms, weights, Combination::AggregateThenCombine)
    }

    /// Per-stratum combination aggregated across strata; all transforms share
    /// one weight scheme.
    pub fn combine_then_aggregate(
        transforms: Vec<RankTransform>,
        weights: WeightScheme,
    ) -> Result<Self> {
        let n = transforms.len();
        Self::new(transforms, vec![weights; n], Combination::CombineThenAggregate)
    }

    fn new(
        transforms: Vec<RankTransform>,
        mut weights: Vec<WeightScheme>,
        combination: Combination,
    ) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::EmptyGroup);
        }
        if combination == Combination::Single && transforms.len() != 1 {
            return Err(Error::Invalid(
                "single combination takes exactly one transform".into(),
            ));
        }
        for t in &transforms {
            if t.domain() != RankDomain::Normalized {
                return Err(Error::Invalid(format!(
                    "stratified statistics require normalized-rank transforms, got {}",
                    t.label()
                )));
            }
        }
        if weights.len() == 1 && transforms.len() > 1 {
            weights = vec![weights[0].clone(); transforms.len()];
        }
        if weights.len() != transforms.len() {
            return Err(Error::LengthMismatch(weights.len(), transforms.len()));
        }
        Ok(StratifiedSpec {
            transforms,
            weights,
            combination,
        })
    }

    pub fn transforms(&self) -> &[RankTransform] {
        &self.transforms
    }

    pub fn combination(&self) -> Combination {
        self.combination
    }

    pub fn weight_schemes(&self) -> &[WeightScheme] {
        &self.weights
    }

    /// Per-transform, per-stratum weights.
    pub fn weight_matrix(&self, sizes: &[StratumSize]) -> Result<Vec<Vec<f64>>> {
        self.weights.iter().map(|w| w.weights(sizes)).collect()
    }
}

/// Standardization constants of the stratified statistics under the design.
#[derive(Debug, Clone)]
pub struct SreMoments {
    /// Aggregate mean per transform: `sum_s w_s * mu_s`.
    pub mu: Vec<f64>,
    /// Aggregate sd per transform: `sqrt(sum_s w_s^2 sigma_s^2)`.
    pub sigma: Vec<f64>,
    /// Per-transform, per-stratum means of the stratum statistic.
    pub stratum_mean: Vec<Vec<f64>>,
    /// Per-transform sd of `phi(U)`, `U ~ Uniform(0,1)`.
    pub sd_phi_u: Vec<Option<f64>>,
}

/// Exact moments of the weighted stratified statistics.
pub fn sre_moments(spec: &StratifiedSpec, sizes: &[StratumSize]) -> Result<SreMoments> {
    let weights = spec.weight_matrix(sizes)?;
    let h_count = spec.transforms.len();
    let mut mu = vec![0.0; h_count];
    let mut var = vec![0.0; h_count];
    let mut stratum_mean = vec![Vec::with_capacity(sizes.len()); h_count];
    let mut sd_phi_u = Vec::with_capacity(h_count);
    for (h, t) in spec.transforms.iter().enumerate() {
        for (s, st) in sizes.iter().enumerate() {
            let m = transform_moments(t, st.n, st.n1)?;
            let w = weights[h][s];
            mu[h] += w * m.mean;
            var[h] += w * w * m.sd * m.sd;
            stratum_mean[h].push(m.mean);
        }
        sd_phi_u.push(crate::ranks::sd_phi_u(t));
    }
    Ok(SreMoments {
        mu,
        sigma: var.into_iter().map(f64::sqrt).collect(),
        stratum_mean,
        sd_phi_u,
    })
}

/// Per-stratum view of a dataset restricted to active strata.
fn stratum_slices(data: &Dataset) -> Vec<(Vec<bool>, Vec<f64>, usize)> {
    data.strata()
        .iter()
        .map(|s| {
            let z: Vec<bool> = s.members.iter().map(|&i| data.units()[i].treated).collect();
            let y: Vec<f64> = s.members.iter().map(|&i| data.units()[i].outcome).collect();
            (z, y, s.n1)
        })
        .collect()
}

fn sizes_of(data: &Dataset) -> Vec<StratumSize> {
    data.strata()
        .iter()
        .map(|s| StratumSize { n: s.n(), n1: s.n1 })
        .collect()
}

/// Mean-form stratum statistics `(1/n_s1) sum z phi(r~)` for every transform,
/// summed in ascending rank order.
fn stratum_mean_stats(
    z_s: &[bool],
    y_s: &[f64],
    phis: &[Vec<f64>],
    n1: usize,
) -> Result<Vec<f64>> {
    let ranks = compute_ranks(y_s)?;
    let order = ranks.by_rank();
    let mut out = Vec::with_capacity(phis.len());
    for phi in phis {
        let mut acc = 0.0;
        for (r, &unit) in order.iter().enumerate() {
            if z_s[unit] {
                acc += phi[r];
            }
        }
        out.push(acc / n1 as f64);
    }
    Ok(out)
}

/// Observed weighted stratified statistic per transform:
/// `t_h = sum_s w_h[s] * (1/n_s1) * sum_i z_si phi_h(r_i / (n_s + 1))`.
pub fn stratified_statistic(data: &Dataset, spec: &StratifiedSpec) -> Result<Vec<f64>> {
    let sizes = sizes_of(data);
    let weights = spec.weight_matrix(&sizes)?;
    let slices = stratum_slices(data);
    let mut totals = vec![0.0; spec.transforms.len()];
    for (s, (z_s, y_s, n1)) in slices.iter().enumerate() {
        let phis: Vec<Vec<f64>> = spec
            .transforms
            .iter()
            .map(|t| t.phi_table(y_s.len()))
            .collect::<Result<_>>()?;
        let stats = stratum_mean_stats(z_s, y_s, &phis, *n1)?;
        for (h, &v) in stats.iter().enumerate() {
            totals[h] += weights[h][s] * v;
        }
    }
    Ok(totals)
}

/// Per-stratum infimum values of the stratum statistics over the null
/// constraint sets: entry `[s][j][h]` is the h-th stratum statistic at the
/// worst-case imputation with `j` slots kept in stratum `s` (the remaining
/// `n_s1 - j` treated units hypothesized infinitely large).
#[derive(Debug, Clone)]
pub struct InfimumTable {
    values: Vec<Vec<Vec<f64>>>,
}

impl InfimumTable {
    pub fn values(&self) -> &[Vec<Vec<f64>>] {
        &self.values
    }

    pub fn stratum_count(&self) -> usize {
        self.values.len()
    }

    /// Total number of slot options (= sum of treated counts).
    pub fn max_budget(&self) -> usize {
        self.values.iter().map(|rows| rows.len() - 1).sum()
    }
}

/// Build the infimum table for threshold `c`.
///
/// Within a stratum, the imputation for `j` kept slots differs from the
/// no-slot imputation only in which treated units sink to `-inf`, and a unit
/// at `-inf` ranks below everything with ties broken by index. So one sort of
/// the base imputed vector (every treated outcome at `y - c`) yields every
/// row: the `-inf` units in index order, then the base order with those units
/// removed. Each row then costs O(n) instead of a fresh sort.
pub fn build_infimum_table(
    data: &Dataset,
    c: f64,
    transforms: &[RankTransform],
) -> Result<InfimumTable> {
    if !c.is_finite() {
        return Err(Error::Invalid("threshold must be finite".into()));
    }
    let slices = stratum_slices(data);
    let values = slices
        .iter()
        .map(|(z_s, y_s, n1)| {
            let n = y_s.len();
            let phis: Vec<Vec<f64>> = transforms
                .iter()
                .map(|t| t.phi_table(n))
                .collect::<Result<_>>()?;
            // treated units by descending observed rank: the -inf assignment order
            let obs_ranks = compute_ranks(y_s)?;
            let mut drop_order: Vec<usize> = (0..n).filter(|&i| z_s[i]).collect();
            drop_order.sort_unstable_by_key(|&i| std::cmp::Reverse(obs_ranks.rank(i)));
            // base imputation: every treated unit at y - c
            let base: Vec<f64> = z_s
                .iter()
                .zip(y_s)
                .map(|(&zi, &yi)| if zi { yi - c } else { yi })
                .collect();
            let base_order = compute_ranks(&base)?.by_rank();

            let mut rows = vec![Vec::new(); n1 + 1];
            let mut dropped = vec![false; n];
            let mut neg_inf_by_index: Vec<usize> = Vec::with_capacity(*n1);
            let mut order = Vec::with_capacity(n);
            for j in (0..=*n1).rev() {
                // j kept slots = n1 - j units at -inf
                order.clear();
                order.extend_from_slice(&neg_inf_by_index);
                order.extend(base_order.iter().copied().filter(|&u| !dropped[u]));
                let mut stats = Vec::with_capacity(phis.len());
                for phi in &phis {
                    let mut acc = 0.0;
                    for (r, &unit) in order.iter().enumerate() {
                        if z_s[unit] {
                            acc += phi[r];
                        }
                    }
                    stats.push(acc / *n1 as f64);
                }
                rows[j] = stats;
                if j > 0 {
                    let u = drop_order[*n1 - j];
                    dropped[u] = true;
                    let pos = neg_inf_by_index.partition_point(|&v| v < u);
                    neg_inf_by_index.insert(pos, u);
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InfimumTable { values })
}

/// Reference implementation of one infimum-table row through the generic
/// imputation path; the incremental builder must match it bit for bit.
#[cfg(test)]
fn infimum_row_naive(
    z_s: &[bool],
    y_s: &[f64],
    n1: usize,
    j: usize,
    c: f64,
    transforms: &[RankTransform],
) -> Result<Vec<f64>> {
    let phis: Vec<Vec<f64>> = transforms
        .iter()
        .map(|t| t.phi_table(y_s.len()))
        .collect::<Result<_>>()?;
    let xi = cre::worst_case_imputation(z_s, y_s, j, c)?;
    let imputed = cre::imputed_outcomes(z_s, y_s, &xi);
    stratum_mean_stats(z_s, &imputed, &phis, n1)
}

/// Per-stratum combined value for the combine-then-aggregate statistic:
/// `max_h (t_s_h - mean_s_h) / sd(phi_h(U))`.
pub fn sd_phi_standardize(
    stratum_stats: &[f64],
    stratum_means: &[f64],
    sd_phi_u: &[Option<f64>],
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for (h, &v) in stratum_stats.iter().enumerate() {
        let sd = sd_phi_u[h].ok_or(Error::DegenerateStatistic)?;
        if !(sd > 0.0) {
            return Err(Error::DegenerateStatistic);
        }
        let t = (v - stratum_means[h]) / sd;
        if t > best {
            best = t;
        }
    }
    Ok(best)
}

/// Null-law evaluator of the statistic selected by `spec`, over the canonical
/// stratum-concatenated layout for the given design.
///
/// The statistic is distribution-free, so the evaluator ranks a canonical
/// reference outcome vector (positions in stratum order). To verify that
/// freeness, [`null_evaluator_with_reference`] accepts arbitrary reference
/// outcomes instead.
pub fn null_evaluator(
    spec: &StratifiedSpec,
    sizes: &[StratumSize],
) -> Result<impl Fn(&[bool]) -> f64 + Sync + Send + use<>> {
    let total: usize = sizes.iter().map(|s| s.n).sum();
    let canonical: Vec<f64> = (0..total).map(|i| i as f64).collect();
    null_evaluator_with_reference(spec, sizes, &canonical)
}

/// Like [`null_evaluator`], with within-stratum ranks taken from the given
/// reference outcomes (canonical layout).
pub fn null_evaluator_with_reference(
    spec: &StratifiedSpec,
    sizes: &[StratumSize],
    y_ref: &[f64],
) -> Result<impl Fn(&[bool]) -> f64 + Sync + Send + use<>> {
    let total: usize = sizes.iter().map(|s| s.n).sum();
    if y_ref.len() != total {
        return Err(Error::LengthMismatch(y_ref.len(), total));
    }
    let weights = spec.weight_matrix(sizes)?;
    let moments = sre_moments(spec, sizes)?;
    let combination = spec.combination();
    if combination == Combination::AggregateThenCombine
        && moments.sigma.iter().any(|&s| !(s > 0.0))
    {
        return Err(Error::DegenerateStatistic);
    }
    if combination == Combination::CombineThenAggregate
        && moments.sd_phi_u.iter().any(|sd| !matches!(sd, Some(v) if *v > 0.0))
    {
        return Err(Error::DegenerateStatistic);
    }
    // phi[h][s][r-1] over within-stratum ranks
    let phis: Vec<Vec<Vec<f64>>> = spec
        .transforms
        .iter()
        .map(|t| sizes.iter().map(|st| t.phi_table(st.n)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    // unit position (stratum-local) holding each rank of the reference
    let mut off = 0;
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(sizes.len());
    for st in sizes {
        orders.push(compute_ranks(&y_ref[off..off + st.n])?.by_rank());
        off += st.n;
    }
    let n1s: Vec<usize> = sizes.iter().map(|s| s.n1).collect();
    let ns: Vec<usize> = sizes.iter().map(|s| s.n).collect();
    let shared_weights = weights[0].clone();

    Ok(move |z: &[bool]| {
        let h_count = phis.len();
        let s_count = ns.len();
        // per-stratum mean-form statistics, summed in ascending rank order
        let mut stat = vec![vec![0.0; s_count]; h_count];
        let mut off = 0;
        for s in 0..s_count {
            for (h, stat_h) in stat.iter_mut().enumerate() {
                let phi = &phis[h][s];
                let order = &orders[s];
                let mut acc = 0.0;
                for (r, &unit) in order.iter().enumerate() {
                    if z[off + unit] {
                        acc += phi[r];
                    }
                }
                stat_h[s] = acc / n1s[s] as f64;
            }
            off += ns[s];
        }
        match combination {
            Combination::Single => {
                let mut acc = 0.0;
                for s in 0..s_count {
                    acc += weights[0][s] * stat[0][s];
                }
                acc
            }
            Combination::AggregateThenCombine => {
                let mut best = f64::NEG_INFINITY;
                for h in 0..h_count {
                    let mut acc = 0.0;
                    for s in 0..s_count {
                        acc += weights[h][s] * stat[h][s];
                    }
                    let v = (acc - moments.mu[h]) / moments.sigma[h];
                    if v > best {
                        best = v;
                    }
                }
                best
            }
            Combination::CombineThenAggregate => {
                let mut acc = 0.0;
                for s in 0..s_count {
                    let mut best = f64::NEG_INFINITY;
                    for h in 0..h_count {
                        let sd = moments.sd_phi_u[h].expect("validated above");
                        let v = (stat[h][s] - moments.stratum_mean[h][s]) / sd;
                        if v > best {
                            best = v;
                        }
                    }
                    acc += shared_weights[s] * best;
                }
                acc
            }
        }
    })
}

/// How the allocation subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SreSolver {
    /// Dynamic programming; exact for separable objectives.
    Dp,
    /// Branch-and-bound with LP bounds (falls back to brute force when the
    /// allocation count is small); exact.
    BranchAndBound,
    /// Exhaustive enumeration; exact.
    BruteForce,
    /// LP relaxation of the integer program; conservative.
    LpRelaxation,
}

#[derive(Debug, Clone)]
pub struct SrePValue {
    pub p: f64,
    pub exactness: Exactness,
    /// The optimized statistic the tail probability was taken at.
    pub statistic: f64,
}

/// Worst-case optimized statistic for hypothesis budget `k_eff` over the
/// active strata, given the infimum table for the threshold.
pub fn optimized_statistic(
    spec: &StratifiedSpec,
    sizes: &[StratumSize],
    table: &InfimumTable,
    k_eff: usize,
    solver: SreSolver,
) -> Result<(f64, Exactness)> {
    let weights = spec.weight_matrix(sizes)?;
    let moments = sre_moments(spec, sizes)?;
    match spec.combination() {
        Combination::Single => {
            let values: Vec<Vec<f64>> = table
                .values()
                .iter()
                .enumerate()
                .map(|(s, rows)| rows.iter().map(|r| weights[0][s] * r[0]).collect())
                .collect();
            separable_minimum(&values, k_eff, solver)
        }
        Combination::CombineThenAggregate => {
            let values: Vec<Vec<f64>> = table
                .values()
                .iter()
                .enumerate()
                .map(|(s, rows)| {
                    rows.iter()
                        .map(|r| {
                            let means: Vec<f64> =
                                (0..r.len()).map(|h| moments.stratum_mean[h][s]).collect();
                            sd_phi_standardize(r, &means, &moments.sd_phi_u)
                                .map(|v| weights[0][s] * v)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            separable_minimum(&values, k_eff, solver)
        }
        Combination::AggregateThenCombine => {
            if moments.sigma.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::DegenerateStatistic);
            }
            let inst = MinimaxInstance {
                table: table.values(),
                weights: &weights,
                mu: &moments.mu,
                sigma: &moments.sigma,
            };
            let mode = match solver {
                SreSolver::Dp => {
                    return Err(Error::Invalid(
                        "dp requires a separable objective; use bnb, brute, or lp".into(),
                    ))
                }
                SreSolver::BranchAndBound => SolverMode::Exact,
                SreSolver::BruteForce => SolverMode::BruteForce,
                SreSolver::LpRelaxation => SolverMode::LpRelaxation,
            };
            let res = minimax::allocate_minimax(&inst, k_eff, mode)?;
            Ok((res.objective, res.exactness))
        }
    }
}

/// Exact DP (or conservative LP) minimum of a separable objective.
fn separable_minimum(
    values: &[Vec<f64>],
    k_eff: usize,
    solver: SreSolver,
) -> Result<(f64, Exactness)> {
    match solver {
        SreSolver::LpRelaxation => {
            // one-statistic epigraph form of the same program
            let weights = vec![vec![1.0; values.len()]];
            let table: Vec<Vec<Vec<f64>>> = values
                .iter()
                .map(|rows| rows.iter().map(|&v| vec![v]).collect())
                .collect();
            let inst = MinimaxInstance {
                table: &table,
                weights: &weights,
                mu: &[0.0],
                sigma: &[1.0],
            };
            let res = minimax::allocate_minimax(&inst, k_eff, SolverMode::LpRelaxation)?;
            Ok((res.objective, res.exactness))
        }
        _ => {
            let (objective, _) = knapsack::allocate_dp(values, k_eff)?;
            Ok((objective, Exactness::Exact))
        }
    }
}

/// p-value for the treated-group quantile hypothesis `(k, c)` under the SRE.
///
/// `nd` must be the null law of the statistic selected by `spec` under the
/// active-strata design (see [`null_evaluator`]). Treated units in excluded
/// all-treated strata absorb hypothesized large-effect slots before the
/// budget reaches the optimizer. With [`SreSolver::LpRelaxation`] the
/// optimized statistic is a lower bound, and a relative 1e-9 guard is
/// subtracted before the tail lookup so the conservative p-value can never
/// undercut the exact one through float noise.
pub fn pvalue_sre(
    data: &Dataset,
    spec: &StratifiedSpec,
    k: usize,
    c: f64,
    nd: &NullDistribution,
    solver: SreSolver,
) -> Result<SrePValue> {
    let n1_total = data.n_treated();
    if k > n1_total {
        return Err(Error::InfeasibleBudget { k, max: n1_total });
    }
    let sizes = sizes_of(data);
    let table = build_infimum_table(data, c, spec.transforms())?;
    let k_eff = k.saturating_sub(data.absorbed_slots());
    let (statistic, exactness) = optimized_statistic(spec, &sizes, &table, k_eff, solver)?;
    let lookup = match exactness {
        Exactness::Exact => statistic,
        Exactness::ConservativeLowerBound => statistic - 1e-9 * (1.0 + statistic.abs()),
    };
    Ok(SrePValue {
        p: nd.tail_probability(lookup),
        exactness,
        statistic,
    })
}
