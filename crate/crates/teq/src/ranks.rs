//! Within-group ranks, rank transformations, and their exact moments.
//!
//! Ranks are 1-based and tie-broken deterministically by position: unit `i`
//! ranks below unit `j` iff `y[i] < y[j]`, or `y[i] == y[j]` and `i < j`.
//! Positions refer to the analysis order, which is fixed by one seeded shuffle
//! at data load (see [`crate::data::Dataset`]); the shuffle is what makes the
//! index tie-break distribution-free. `-inf` is a legal outcome value (it is
//! how imputed infinitely-large effects enter) and sorts below every finite
//! value.

use crate::error::{Error, Result};

/// Ranks of a group: a permutation of `1..=m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector {
    ranks: Vec<usize>,
}

impl RankVector {
    /// Rank of unit `i` (1-based).
    pub fn rank(&self, i: usize) -> usize {
        self.ranks[i]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Unit indices sorted by ascending rank (the inverse permutation).
    pub fn by_rank(&self) -> Vec<usize> {
        let mut order = vec![0usize; self.ranks.len()];
        for (i, &r) in self.ranks.iter().enumerate() {
            order[r - 1] = i;
        }
        order
    }
}

/// Ranks with the deterministic index tie-break.
///
/// Outcomes must be non-NaN; `-inf` is allowed and sorts first.
pub fn compute_ranks(y: &[f64]) -> Result<RankVector> {
    if y.is_empty() {
        return Err(Error::EmptyGroup);
    }
    debug_assert!(y.iter().all(|v| !v.is_nan()));
    let mut order: Vec<usize> = (0..y.len()).collect();
    // (value, index) is a strict total order once NaN is excluded.
    order.sort_unstable_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0usize; y.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    Ok(RankVector { ranks })
}

/// Which argument a transformation consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankDomain {
    /// Raw integer rank `r` in `1..=m`.
    Raw,
    /// Normalized rank `r / (m + 1)` in `(0, 1)`.
    Normalized,
}

/// A monotone nondecreasing transformation of (raw or normalized) ranks.
#[derive(Debug, Clone, PartialEq)]
pub enum RankTransform {
    /// `phi(r) = C(r - 1, zeta - 1)` for `r >= zeta`, else 0. Raw domain.
    Stephenson { zeta: u32 },
    /// `phi(x) = x^(zeta - 1)` on the normalized rank `x = r / (m + 1)`.
    Polynomial { zeta: f64 },
    /// The identity on either domain; raw identity is the Wilcoxon transform.
    Identity { domain: RankDomain },
    /// Explicit nondecreasing table indexed by raw rank.
    Table { values: Vec<f64> },
}

impl RankTransform {
    pub fn stephenson(zeta: u32) -> Result<Self> {
        if zeta < 2 {
            return Err(Error::Invalid(format!(
                "stephenson parameter must be >= 2, got {zeta}"
            )));
        }
        Ok(RankTransform::Stephenson { zeta })
    }

    pub fn polynomial(zeta: f64) -> Result<Self> {
        if !(zeta >= 1.0) {
            return Err(Error::Invalid(format!(
                "polynomial parameter must be >= 1, got {zeta}"
            )));
        }
        Ok(RankTransform::Polynomial { zeta })
    }

    /// Raw identity: the Wilcoxon rank sum transform.
    pub fn wilcoxon() -> Self {
        RankTransform::Identity {
            domain: RankDomain::Raw,
        }
    }

    pub fn identity_normalized() -> Self {
        RankTransform::Identity {
            domain: RankDomain::Normalized,
        }
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyGroup);
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("table transform must be nondecreasing".into()));
        }
        Ok(RankTransform::Table { values })
    }

    pub fn domain(&self) -> RankDomain {
        match self {
            RankTransform::Stephenson { .. } | RankTransform::Table { .. } => RankDomain::Raw,
            RankTransform::Polynomial { .. } => RankDomain::Normalized,
            RankTransform::Identity { domain } => *domain,
        }
    }

    /// `phi(r)` for raw-domain transforms, `phi(r / (m + 1))` for normalized.
    pub fn apply(&self, rank: usize, m: usize) -> Result<f64> {
        debug_assert!(rank >= 1 && rank <= m);
        match self {
            RankTransform::Stephenson { zeta } => {
                let r = rank as u64;
                let z = u64::from(*zeta);
                if r < z {
                    Ok(0.0)
                } else {
                    Ok(binomial(r - 1, z - 1))
                }
            }
            RankTransform::Polynomial { zeta } => {
                Ok(polynomial_phi(rank as f64 / (m as f64 + 1.0), *zeta))
            }
            RankTransform::Identity { domain } => match domain {
                RankDomain::Raw => Ok(rank as f64),
                RankDomain::Normalized => Ok(rank as f64 / (m as f64 + 1.0)),
            },
            RankTransform::Table { values } => {
                if values.len() < m {
                    return Err(Error::TableSize {
                        table: values.len(),
                        group: m,
                    });
                }
                Ok(values[rank - 1])
            }
        }
    }

    /// Transformed value per rank `1..=m`, for hot loops.
    pub fn phi_table(&self, m: usize) -> Result<Vec<f64>> {
        (1..=m).map(|r| self.apply(r, m)).collect()
    }

    /// Short stable label, e.g. `stephenson:6` or `poly:10`.
    pub fn label(&self) -> String {
        match self {
            RankTransform::Stephenson { zeta } => format!("stephenson:{zeta}"),
            RankTransform::Polynomial { zeta } => format!("poly:{zeta}"),
            RankTransform::Identity {
                domain: RankDomain::Raw,
            } => "wilcoxon".to_string(),
            RankTransform::Identity {
                domain: RankDomain::Normalized,
            } => "identity-normalized".to_string(),
            RankTransform::Table { .. } => "table".to_string(),
        }
    }
}

fn polynomial_phi(x: f64, zeta: f64) -> f64 {
    let e = zeta - 1.0;
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e.fract() == 0.0 && e <= 64.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

/// Binomial coefficient as f64: exact through u128, switching to log-space
/// gamma accumulation once the intermediate product overflows. Values above
/// 2^53 lose integer exactness either way, which is fine for statistic use.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        match acc.checked_mul(u128::from(n - k + i)) {
            // The running product over i = 1..=j is C(n-k+j, j) * something
            // integral, so the division is exact.
            Some(v) => acc = v / u128::from(i),
            None => return binomial_ln(n, k),
        }
    }
    acc as f64
}

fn binomial_ln(n: u64, k: u64) -> f64 {
    (ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)).exp()
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-13 for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    #[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x > 0.0);
    let x = x - 1.0;
    let mut a = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Exact mean and assignment-randomization standard deviation of the
/// per-stratum mean-form rank sum statistic
/// `t_s = (1 / n_s1) * sum_i z_i * phi(arg_i)`,
/// plus the standard deviation of `phi(U)` for `U ~ Uniform(0, 1)` when the
/// transform lives on normalized ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMoments {
    /// Mean of the stratum statistic: the average transformed rank.
    pub mean: f64,
    /// Standard deviation under the within-stratum randomization.
    pub sd: f64,
    /// sd of `phi(U)`, `U ~ Uniform(0,1)`; `None` for raw-domain transforms.
    pub sd_phi_u: Option<f64>,
    /// True when `sd` is structurally zero (constant transform on the group,
    /// or a stratum with no treated or no control units).
    pub degenerate: bool,
}

/// Moments of the mean-form stratum statistic for a stratum of size `n_s`
/// with `n_s1` treated units.
pub fn transform_moments(t: &RankTransform, n_s: usize, n_s1: usize) -> Result<TransformMoments> {
    if n_s == 0 {
        return Err(Error::EmptyGroup);
    }
    if n_s1 > n_s {
        return Err(Error::Invalid(format!(
            "treated count {n_s1} exceeds stratum size {n_s}"
        )));
    }
    let phi = t.phi_table(n_s)?;
    let mean = phi.iter().sum::<f64>() / n_s as f64;
    let ss: f64 = phi.iter().map(|v| (v - mean) * (v - mean)).sum();

    let group_degenerate = n_s1 == 0 || n_s1 == n_s || n_s == 1;
    let constant = ss == 0.0;
    let degenerate = group_degenerate || constant;
    let sd = if degenerate {
        0.0
    } else {
        let n_s0 = n_s - n_s1;
        (n_s0 as f64 / (n_s1 as f64 * n_s as f64 * (n_s as f64 - 1.0)) * ss).sqrt()
    };

    Ok(TransformMoments {
        mean,
        sd,
        sd_phi_u: sd_phi_u(t),
        degenerate,
    })
}

/// sd of `phi(U)` for normalized-domain transforms: closed form for the
/// polynomial family, adaptive quadrature otherwise.
pub fn sd_phi_u(t: &RankTransform) -> Option<f64> {
    match t.domain() {
        RankDomain::Raw => None,
        RankDomain::Normalized => match t {
            RankTransform::Polynomial { zeta } => {
                Some((1.0 / (2.0 * zeta - 1.0) - 1.0 / (zeta * zeta)).sqrt())
            }
            _ => {
                let f = |x: f64| normalized_value(t, x);
                let m1 = adaptive_simpson(&f, 0.0, 1.0, 1e-10);
                let m2 = adaptive_simpson(&|x: f64| f(x) * f(x), 0.0, 1.0, 1e-10);
                Some((m2 - m1 * m1).max(0.0).sqrt())
            }
        },
    }
}

fn normalized_value(t: &RankTransform, x: f64) -> f64 {
    match t {
        RankTransform::Polynomial { zeta } => polynomial_phi(x, *zeta),
        RankTransform::Identity { .. } => x,
        // Raw-domain transforms never reach here.
        _ => unreachable!("normalized evaluation of a raw-domain transform"),
    }
}

/// Adaptive Simpson quadrature with relative tolerance `tol`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * eps, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * eps, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let eps = tol * whole.abs().max(1e-300);
    recurse(f, a, fa, b, fb, whole, m, fm, eps, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ranks_strict_ordering() {
        let r = compute_ranks(&[3.2, 1.1, 5.0]).unwrap();
        assert_eq!(r.ranks(), &[2, 1, 3]);
    }

    #[test]
    fn ranks_tie_broken_by_index() {
        let r = compute_ranks(&[1.0, 1.0]).unwrap();
        assert_eq!(r.ranks(), &[1, 2]);
    }

    #[test]
    fn ranks_neg_infinity_below_finite() {
        let r = compute_ranks(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(r.ranks(), &[1, 3, 2]);
    }

    #[test]
    fn ranks_empty_is_error() {
        assert_eq!(compute_ranks(&[]), Err(Error::EmptyGroup));
    }

    #[test]
    fn by_rank_inverts() {
        let r = compute_ranks(&[2.0, -1.0, 0.5]).unwrap();
        let order = r.by_rank();
        for (pos, &i) in order.iter().enumerate() {
            assert_eq!(r.rank(i), pos + 1);
        }
    }

    #[test]
    fn stephenson_examples() {
        let t = RankTransform::stephenson(5).unwrap();
        assert_eq!(t.apply(20, 20).unwrap(), 3876.0);
        assert_eq!(t.apply(10, 20).unwrap(), 126.0);
        assert_eq!(t.apply(4, 20).unwrap(), 0.0);
    }

    #[test]
    fn stephenson_two_is_wilcoxon_minus_one() {
        let t = RankTransform::stephenson(2).unwrap();
        for r in 1..=30 {
            assert_eq!(t.apply(r, 30).unwrap(), (r as f64) - 1.0);
        }
    }

    #[test]
    fn polynomial_ninetieth_percentile() {
        let t = RankTransform::polynomial(10.0).unwrap();
        // rank 9 of 9 has normalized rank 0.9
        assert_relative_eq!(t.apply(9, 9).unwrap(), 0.9f64.powi(9), max_relative = 1e-14);
    }

    #[test]
    fn table_too_short_errors() {
        let t = RankTransform::table(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            t.apply(3, 3),
            Err(Error::TableSize { table: 2, group: 3 })
        ));
    }

    #[test]
    fn transforms_are_monotone_in_rank() {
        let transforms = vec![
            RankTransform::wilcoxon(),
            RankTransform::identity_normalized(),
            RankTransform::stephenson(2).unwrap(),
            RankTransform::stephenson(5).unwrap(),
            RankTransform::stephenson(30).unwrap(),
            RankTransform::polynomial(2.0).unwrap(),
            RankTransform::polynomial(10.0).unwrap(),
            RankTransform::table((0..50).map(|i| (i * i) as f64).collect()).unwrap(),
        ];
        for t in &transforms {
            for m in 1..=50usize {
                let mut prev = f64::NEG_INFINITY;
                for r in 1..=m {
                    let v = t.apply(r, m).unwrap();
                    assert!(v >= prev, "{} not monotone at r={r}, m={m}", t.label());
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn binomial_large_values_stay_consistent() {
        // C(99, 29) fits in u128 but far exceeds 2^53.
        let exact_path = binomial(99, 29);
        let ln_path = binomial_ln(99, 29);
        assert_relative_eq!(exact_path, ln_path, max_relative = 1e-10);
        // Large enough to overflow the u128 accumulator.
        let big = binomial(300, 150);
        assert!(big.is_finite() && big > 1e80);
    }

    #[test]
    fn moments_identity_normalized_symmetry() {
        let m = transform_moments(&RankTransform::identity_normalized(), 3, 1).unwrap();
        assert_relative_eq!(m.mean, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn moments_polynomial_sd_phi_u_closed_form() {
        let m = transform_moments(&RankTransform::polynomial(2.0).unwrap(), 4, 2).unwrap();
        assert_relative_eq!(
            m.sd_phi_u.unwrap(),
            (1.0f64 / 12.0).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sd_phi_u_quadrature_matches_closed_form_for_identity() {
        // identity on normalized ranks goes through the quadrature path and
        // must agree with the zeta = 2 closed form
        let quad = sd_phi_u(&RankTransform::identity_normalized()).unwrap();
        assert_relative_eq!(quad, (1.0f64 / 12.0).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn sd_phi_u_absent_for_raw_domain() {
        assert!(sd_phi_u(&RankTransform::wilcoxon()).is_none());
        assert!(sd_phi_u(&RankTransform::stephenson(3).unwrap()).is_none());
    }

    #[test]
    fn moments_match_enumeration_stephenson2() {
        // stratum (4, 2): enumerate all 6 assignments of the mean-form
        // statistic and compare mean/sd
        let t = RankTransform::stephenson(2).unwrap();
        let m = transform_moments(&t, 4, 2).unwrap();
        let phi: Vec<f64> = (1..=4).map(|r| t.apply(r, 4).unwrap()).collect();
        let mut vals = Vec::new();
        for a in 0..4 {
            for b in (a + 1)..4 {
                vals.push((phi[a] + phi[b]) / 2.0);
            }
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        assert_relative_eq!(m.mean, mean, max_relative = 1e-12);
        assert_relative_eq!(m.sd, var.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn moments_degenerate_flags() {
        let t = RankTransform::wilcoxon();
        let m = transform_moments(&t, 4, 0).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.sd, 0.0);
        let m = transform_moments(&t, 4, 4).unwrap();
        assert!(m.degenerate);
        // a transform constant on the group is degenerate regardless of counts
        let c = RankTransform::stephenson(10).unwrap();
        let m = transform_moments(&c, 4, 2).unwrap();
        assert!(m.degenerate && m.sd == 0.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rank_permutation_equivariance(
                base in proptest::collection::vec(-1000i32..1000, 2..24),
                seed in any::<u64>(),
            ) {
                // distinct values so the tie pattern is trivially preserved
                let y: Vec<f64> = base
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| f64::from(v) * 16.0 + i as f64 * 1e-3)
                    .collect();
                let ranks = compute_ranks(&y).unwrap();
                // apply a random permutation pi: y'[pi(i)] = y[i]
                let mut perm: Vec<usize> = (0..y.len()).collect();
                let mut rng = crate::seeds::rng(seed, "prop", 0);
                use rand::seq::SliceRandom;
                perm.shuffle(&mut rng);
                let mut permuted = vec![0.0; y.len()];
                for (i, &p) in perm.iter().enumerate() {
                    permuted[p] = y[i];
                }
                let permuted_ranks = compute_ranks(&permuted).unwrap();
                for (i, &p) in perm.iter().enumerate() {
                    prop_assert_eq!(permuted_ranks.rank(p), ranks.rank(i));
                }
            }
        }
    }
}
