//! Inference for effect quantiles under complete randomization.
//!
//! The null hypothesis "the k-th smallest effect among treated units is at
//! most c" constrains the hypothesized effect vector to have at most
//! `n1 - k` treated entries above `c`. Every monotone rank sum statistic is
//! minimized over that constraint set by one closed-form imputation: give the
//! `n1 - k` treated units with the largest observed ranks infinitely large
//! effects (their imputed control outcomes sink to `-inf`) and give the rest
//! exactly `c`. The p-value is the null tail probability of the statistic at
//! that imputation.
//!
//! Three routes combine several rank transformations while keeping validity:
//! the calibrated minimum p-value, the equivalent `-tbar` combined statistic,
//! and the maximum of standardized statistics. The first two agree exactly;
//! the third is a different (cheaper to optimize) statistic that coincides
//! with them in large samples.

use crate::error::{Error, Result};
use crate::nulldist::{DesignSpec, JointNull, NullDistribution};
use crate::ranks::{compute_ranks, transform_moments, RankTransform};

/// Check that `z` and `y` describe a two-group sample.
fn check_problem(z: &[bool], y: &[f64]) -> Result<usize> {
    if z.len() != y.len() {
        return Err(Error::LengthMismatch(z.len(), y.len()));
    }
    if z.is_empty() {
        return Err(Error::EmptyGroup);
    }
    Ok(z.iter().filter(|&&t| t).count())
}

/// The rank sum statistic `sum_i z_i phi(r_i(y))`.
///
/// Summation runs in ascending rank order, so the value is bit-identical for
/// outcome vectors with the same treated-rank set.
pub fn rank_sum_statistic(z: &[bool], y: &[f64], t: &RankTransform) -> Result<f64> {
    check_problem(z, y)?;
    let ranks = compute_ranks(y)?;
    let phi = t.phi_table(y.len())?;
    let mut acc = 0.0;
    for (r, &unit) in ranks.by_rank().iter().enumerate() {
        if z[unit] {
            acc += phi[r];
        }
    }
    Ok(acc)
}

/// Hypothesized per-unit effects realizing the worst case: `+inf` or `c` for
/// treated units, `c` (inert) for controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationVector {
    pub delta: Vec<f64>,
}

/// The closed-form minimizer of every monotone rank sum statistic over the
/// null constraint set: the `n1 - k` treated units with the largest observed
/// ranks get `+inf`, all other units get `c`.
pub fn worst_case_imputation(z: &[bool], y: &[f64], k: usize, c: f64) -> Result<ImputationVector> {
    let n1 = check_problem(z, y)?;
    if k > n1 {
        return Err(Error::InfeasibleBudget { k, max: n1 });
    }
    let ranks = compute_ranks(y)?;
    let mut treated: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
    treated.sort_unstable_by_key(|&i| std::cmp::Reverse(ranks.rank(i)));
    let mut delta = vec![c; z.len()];
    for &i in treated.iter().take(n1 - k) {
        delta[i] = f64::INFINITY;
    }
    Ok(ImputationVector { delta })
}

/// Imputed control potential outcomes `y - z * delta`; treated units with an
/// infinite hypothesized effect land at `-inf`.
pub fn imputed_outcomes(z: &[bool], y: &[f64], imputation: &ImputationVector) -> Vec<f64> {
    z.iter()
        .zip(y)
        .zip(&imputation.delta)
        .map(|((&zi, &yi), &di)| if zi { yi - di } else { yi })
        .collect()
}

/// Statistic value at the worst-case imputation for `(k, c)`.
pub fn infimum_statistic(
    z: &[bool],
    y: &[f64],
    k: usize,
    c: f64,
    t: &RankTransform,
) -> Result<f64> {
    let xi = worst_case_imputation(z, y, k, c)?;
    rank_sum_statistic(z, &imputed_outcomes(z, y, &xi), t)
}

/// p-value for the treated-group quantile null with a single rank statistic.
pub fn pvalue_single(
    z: &[bool],
    y: &[f64],
    k: usize,
    c: f64,
    t: &RankTransform,
    nd: &NullDistribution,
) -> Result<f64> {
    Ok(nd.tail_probability(infimum_statistic(z, y, k, c, t)?))
}

/// Observed statistic vector at the shared worst-case imputation.
fn infimum_statistics(
    z: &[bool],
    y: &[f64],
    k: usize,
    c: f64,
    transforms: &[RankTransform],
) -> Result<Vec<f64>> {
    if transforms.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let xi = worst_case_imputation(z, y, k, c)?;
    let imputed = imputed_outcomes(z, y, &xi);
    transforms
        .iter()
        .map(|t| rank_sum_statistic(z, &imputed, t))
        .collect()
}

/// Calibrated minimum p-value across transforms: `F(min_h p_h)` where `F` is
/// the null distribution function of `min_h G_h(t_h)`.
pub fn pvalue_min_calibrated(
    z: &[bool],
    y: &[f64],
    k: usize,
    c: f64,
    transforms: &[RankTransform],
    joint: &JointNull,
) -> Result<f64> {
    let stats = infimum_statistics(z, y, k, c, transforms)?;
    let p_min = stats
        .iter()
        .enumerate()
        .map(|(h, &v)| joint.marginal(h).tail_probability(v))
        .fold(f64::INFINITY, f64::min);
    Ok(joint.calibrate_min_p(p_min))
}

/// The same test expressed through the combined statistic `-tbar`: apply the
/// tail function of `-tbar` to the observed `-tbar` at the worst-case
/// imputation. Agrees with [`pvalue_min_calibrated`] exactly.
pub fn pvalue_combined_neg_tbar(
    z: &[bool],
    y: &[f64],
    k: usize,
    c: f64,
    transforms: &[RankTransform],
    joint: &JointNull,
) -> Result<f64> {
    let stats = infimum_statistics(z, y, k, c, transforms)?;
    let tbar_obs = joint.tbar(&stats);
    Ok(joint.neg_tbar_null().tail_probability(-tbar_obs))
}

/// Per-transform standardization constants for the max-standardized route,
/// in the raw sum scale of [`rank_sum_statistic`].
#[derive(Debug, Clone)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Exact finite-population mean and sd of each raw rank sum statistic.
pub fn standardization(transforms: &[RankTransform], design: &DesignSpec) -> Result<Standardization> {
    if design.strata().len() != 1 {
        return Err(Error::InvalidDesign(
            "max-standardized combination applies to a single-stratum design".into(),
        ));
    }
    let st = design.strata()[0];
    let mut mean = Vec::with_capacity(transforms.len());
    let mut sd = Vec::with_capacity(transforms.len());
    for t in transforms {
        let m = transform_moments(t, st.n, st.n1)?;
        if m.degenerate {
            return Err(Error::DegenerateStatistic);
        }
        // mean-form moments scale to the raw sum by n1
        mean.push(st.n1 as f64 * m.mean);
        sd.push(st.n1 as f64 * m.sd);
    }
    Ok(Standardization { mean, sd })
}

/// `max_h (t_h - mu_h) / sigma_h` over raw rank sum values.
pub fn max_std_statistic(stats: &[f64], std: &Standardization) -> f64 {
    stats
        .iter()
        .zip(std.mean.iter().zip(&std.sd))
        .map(|(&v, (&m, &s))| (v - m) / s)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluator of the max-standardized statistic for null construction
/// (canonical reference outcomes: rank of unit i is i + 1).
pub fn max_std_evaluator(
    transforms: &[RankTransform],
    design: &DesignSpec,
) -> Result<impl Fn(&[bool]) -> f64 + Sync + Send + use<>> {
    let canonical: Vec<f64> = (0..design.n()).map(|i| i as f64).collect();
    max_std_evaluator_with_reference(transforms, design, &canonical)
}

/// Like [`max_std_evaluator`] with ranks taken from arbitrary reference
/// outcomes.
pub fn max_std_evaluator_with_reference(
    transforms: &[RankTransform],
    design: &DesignSpec,
    y_ref: &[f64],
) -> Result<impl Fn(&[bool]) -> f64 + Sync + Send + use<>> {
    if y_ref.len() != design.n() {
        return Err(Error::LengthMismatch(y_ref.len(), design.n()));
    }
    let std = standardization(transforms, design)?;
    let order = compute_ranks(y_ref)?.by_rank();
    let phis: Vec<Vec<f64>> = transforms
        .iter()
        .map(|t| t.phi_table(y_ref.len()))
        .collect::<Result<_>>()?;
    Ok(move |z: &[bool]| {
        let mut best = f64::NEG_INFINITY;
        for (h, phi) in phis.iter().enumerate() {
            let mut acc = 0.0;
            for (r, &unit) in order.iter().enumerate() {
                if z[unit] {
                    acc += phi[r];
                }
            }
            let v = (acc - std.mean[h]) / std.sd[h];
            if v > best {
                best = v;
            }
        }
        best
    })
}

/// p-value via the maximum of standardized statistics (needs the null law of
/// that combined statistic, e.g. from [`max_std_evaluator`]).
pub fn pvalue_combined_max_std(
    z: &[bool],
    y: &[f64],
    k: usize,
    c: f64,
    transforms: &[RankTransform],
    std: &Standardization,
    nd: &NullDistribution,
) -> Result<f64> {
    let stats = infimum_statistics(z, y, k, c, transforms)?;
    Ok(nd.tail_probability(max_std_statistic(&stats, std)))
}

/// Rank-sum evaluator against fixed reference outcomes, for null laws.
pub fn rank_sum_evaluator(
    t: &RankTransform,
    y_ref: &[f64],
) -> Result<impl Fn(&[bool]) -> f64 + Sync + Send + use<>> {
    let ranks = compute_ranks(y_ref)?;
    let order = ranks.by_rank();
    let phi = t.phi_table(y_ref.len())?;
    Ok(move |z: &[bool]| {
        let mut acc = 0.0;
        for (r, &unit) in order.iter().enumerate() {
            if z[unit] {
                acc += phi[r];
            }
        }
        acc
    })
}

/// Multi-statistic evaluator sharing one reference outcome vector.
pub fn rank_sum_vector_evaluator(
    transforms: &[RankTransform],
    y_ref: &[f64],
) -> Result<impl Fn(&[bool]) -> Vec<f64> + Sync + Send + use<>> {
    let ranks = compute_ranks(y_ref)?;
    let order = ranks.by_rank();
    let phis: Vec<Vec<f64>> = transforms
        .iter()
        .map(|t| t.phi_table(y_ref.len()))
        .collect::<Result<_>>()?;
    Ok(move |z: &[bool]| {
        phis.iter()
            .map(|phi| {
                let mut acc = 0.0;
                for (r, &unit) in order.iter().enumerate() {
                    if z[unit] {
                        acc += phi[r];
                    }
                }
                acc
            })
            .collect()
    })
}

/// Switch treatment labels and negate outcomes. Applying it twice is the
/// identity; it maps control-group hypotheses onto the treated-group
/// machinery.
pub fn flip_problem(z: &[bool], y: &[f64]) -> (Vec<bool>, Vec<f64>) {
    (
        z.iter().map(|&t| !t).collect(),
        y.iter().map(|&v| -v).collect(),
    )
}
