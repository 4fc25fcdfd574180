//! Test inversion into simultaneous lower bounds for effect quantiles.
//!
//! For fixed k the p-value is a nondecreasing step function of the threshold
//! c: the worst-case imputation and the within-stratum ranks change only when
//! an imputed treated outcome `y_i - c` crosses another outcome, i.e. at the
//! pairwise differences `y_i - y_j` within a stratum. Inversion therefore
//! searches the sorted candidate set (evaluating candidates and the open
//! intervals between them) instead of a continuous grid, and is lossless.
//!
//! Simultaneity across k comes for free from the nesting of the constraint
//! sets, so no multiplicity adjustment is applied within a group. Pooling the
//! treated and control tables (each at level `1 - alpha`) and sorting the
//! bounds yields confidence bounds for all-units quantiles at `1 - 2 alpha`.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec;

/// Lower bound for one effect quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundEntry {
    pub k: usize,
    /// Lower bound; `-inf` when the data cannot rule out any threshold.
    pub bound: f64,
    /// Whether the bound itself is covered (`[bound, inf]` vs `(bound, inf]`).
    pub closed: bool,
    /// p-value evaluated exactly at the bound (at the lowest candidate for
    /// `-inf` bounds).
    pub p_at_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Treated,
    Control,
    All,
}

impl Group {
    pub fn label(&self) -> &'static str {
        match self {
            Group::Treated => "treated",
            Group::Control => "control",
            Group::All => "all",
        }
    }
}

/// Simultaneous lower bounds for the effect quantiles of one group.
#[derive(Debug, Clone)]
pub struct BoundsTable {
    pub group: Group,
    /// Simultaneous coverage level of the table.
    pub level: f64,
    pub entries: Vec<BoundEntry>,
}

/// Thresholds at which any p-value step can occur: within each stratum, all
/// differences `y_i - y_j` with unit `i` treated and `j` ranging over every
/// unit of the stratum (including `i`, hence 0 is always present), pooled
/// across strata, sorted, deduplicated.
pub fn candidate_breakpoints(data: &Dataset) -> Vec<f64> {
    let units = data.units();
    let mut cs = Vec::new();
    for stratum in data.strata() {
        for &i in &stratum.members {
            if !units[i].treated {
                continue;
            }
            for &j in &stratum.members {
                cs.push(units[i].outcome - units[j].outcome);
            }
        }
    }
    cs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    cs.dedup();
    cs
}

/// Evaluation grid for the inversion: each candidate, the interior of each
/// gap between consecutive candidates, and sentinels outside the range.
#[derive(Debug, Clone, Copy)]
enum GridPoint {
    Below,
    Candidate(usize),
    Interior(usize),
    Above,
}

fn grid(candidates: &[f64]) -> Vec<(f64, GridPoint)> {
    let mut points = Vec::with_capacity(2 * candidates.len() + 2);
    if candidates.is_empty() {
        return points;
    }
    points.push((candidates[0] - 1.0, GridPoint::Below));
    for (i, &c) in candidates.iter().enumerate() {
        points.push((c, GridPoint::Candidate(i)));
        if i + 1 < candidates.len() {
            let mid = 0.5 * (c + candidates[i + 1]);
            // adjacent floats can have no interior point; skip those gaps
            if mid > c && mid < candidates[i + 1] {
                points.push((mid, GridPoint::Interior(i)));
            }
        }
    }
    points.push((candidates[candidates.len() - 1] + 1.0, GridPoint::Above));
    points
}

/// Invert a p-value function over the candidate thresholds for one quantile:
/// the smallest c with `p(k, c) > alpha`, its open/closed flag, and the
/// p-value at the bound.
///
/// Requires `pfun` nondecreasing in c (a property of every p-value in this
/// crate). Returns a `-inf` bound when even thresholds below every candidate
/// cannot be rejected, and errors if p never exceeds alpha on the grid (which
/// a valid p-value cannot do above the top candidate).
pub fn invert_quantile<F>(
    pfun: &F,
    k: usize,
    alpha: f64,
    candidates: &[f64],
) -> Result<BoundEntry>
where
    F: Fn(usize, f64) -> Result<f64>,
{
    let points = grid(candidates);
    if points.is_empty() {
        return Err(Error::Invalid("no candidate thresholds".into()));
    }
    // binary search for the first grid point with p > alpha
    let mut lo = 0usize;
    let mut hi = points.len();
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pfun(k, points[mid].0)? > alpha {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    if lo == points.len() {
        return Err(Error::InversionFailed);
    }
    let entry = match points[lo].1 {
        GridPoint::Below => BoundEntry {
            k,
            bound: f64::NEG_INFINITY,
            closed: false,
            p_at_bound: pfun(k, points[lo].0)?,
        },
        GridPoint::Candidate(i) => BoundEntry {
            k,
            bound: candidates[i],
            closed: true,
            p_at_bound: pfun(k, candidates[i])?,
        },
        // p first exceeds alpha strictly inside a gap or past the top
        // candidate: the infimum is the candidate below, not attained
        GridPoint::Interior(i) => BoundEntry {
            k,
            bound: candidates[i],
            closed: false,
            p_at_bound: pfun(k, candidates[i])?,
        },
        GridPoint::Above => {
            let i = candidates.len() - 1;
            BoundEntry {
                k,
                bound: candidates[i],
                closed: false,
                p_at_bound: pfun(k, candidates[i])?,
            }
        }
    };
    Ok(entry)
}

/// Simultaneous lower prediction bounds for quantiles `1..=n_group`.
///
/// Per-quantile inversions are independent and run in parallel.
pub fn simultaneous_bounds<F>(
    pfun: &F,
    n_group: usize,
    group: Group,
    alpha: f64,
    candidates: &[f64],
) -> Result<BoundsTable>
where
    F: Fn(usize, f64) -> Result<f64> + Sync + Send,
{
    if n_group == 0 {
        return Err(Error::EmptyGroup);
    }
    let entries: Vec<Result<BoundEntry>> =
        exec::map_indexed(n_group, |i| invert_quantile(pfun, i + 1, alpha, candidates));
    let entries = entries.into_iter().collect::<Result<Vec<_>>>()?;
    debug_assert!(entries.windows(2).all(|w| w[0].bound <= w[1].bound));
    Ok(BoundsTable {
        group,
        level: 1.0 - alpha,
        entries,
    })
}

/// Pool treated and control prediction tables into all-units confidence
/// bounds: the `n1 + n0` lower bounds sorted ascending (stably, treated
/// first) and reassigned to `k = 1..=n`, at level `1 - 2 alpha`.
pub fn pool_confidence(treated: &BoundsTable, control: &BoundsTable) -> Result<BoundsTable> {
    if (treated.level - control.level).abs() > 1e-12 {
        return Err(Error::Invalid(format!(
            "pooled tables must share a level: {} vs {}",
            treated.level, control.level
        )));
    }
    let mut pooled: Vec<BoundEntry> = treated
        .entries
        .iter()
        .chain(control.entries.iter())
        .cloned()
        .collect();
    pooled.sort_by(|a, b| a.bound.partial_cmp(&b.bound).unwrap());
    for (i, e) in pooled.iter_mut().enumerate() {
        e.k = i + 1;
    }
    Ok(BoundsTable {
        group: Group::All,
        level: 1.0 - 2.0 * (1.0 - treated.level),
        entries: pooled,
    })
}
