//! Flag values shared by the subcommands.

use clap::ValueEnum;
use teq::ranks::RankTransform;
use teq::sre::{SreSolver, WeightScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Method {
    /// One rank statistic.
    Single,
    /// Calibrated minimum p-value across statistics (CRE only).
    MinP,
    /// Maximum of standardized statistics (aggregate-then-combine on
    /// stratified data).
    MaxStd,
    /// Aggregate each statistic across strata, then combine.
    Comb1,
    /// Combine within each stratum, then aggregate.
    Comb2,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Single => "single",
            Method::MinP => "min_p",
            Method::MaxStd => "max_std",
            Method::Comb1 => "comb1",
            Method::Comb2 => "comb2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Weights {
    Scheme1,
    Scheme2,
}

impl Weights {
    pub fn scheme(&self) -> WeightScheme {
        match self {
            Weights::Scheme1 => WeightScheme::Scheme1,
            Weights::Scheme2 => WeightScheme::Scheme2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Solver {
    Dp,
    Bnb,
    Lp,
    Brute,
}

impl Solver {
    pub fn sre_solver(&self) -> SreSolver {
        match self {
            Solver::Dp => SreSolver::Dp,
            Solver::Bnb => SreSolver::BranchAndBound,
            Solver::Lp => SreSolver::LpRelaxation,
            Solver::Brute => SreSolver::BruteForce,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Solver::Dp => "dp",
            Solver::Bnb => "bnb",
            Solver::Lp => "lp",
            Solver::Brute => "brute",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Treated,
    Control,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    /// Alternatives favor effects exceeding the threshold.
    Greater,
    /// Alternatives favor effects below the threshold (outcomes and
    /// thresholds are negated internally).
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NullModeArg {
    /// Exact enumeration when the design allows it, Monte Carlo otherwise.
    Auto,
    Exact,
    Mc,
}

/// Parse a transform list such as `stephenson:2,6,10,30`, `poly:2,6,10`,
/// `wilcoxon`, or combinations joined with `;`.
pub fn parse_transforms(s: &str) -> Result<Vec<RankTransform>, String> {
    let mut out = Vec::new();
    for part in s.split(';') {
        let part = part.trim();
        if let Some(rest) = part.strip_prefix("stephenson:") {
            for tok in rest.split(',') {
                let zeta: u32 = tok
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad stephenson parameter '{tok}'"))?;
                out.push(RankTransform::stephenson(zeta).map_err(|e| e.to_string())?);
            }
        } else if let Some(rest) = part.strip_prefix("poly:") {
            for tok in rest.split(',') {
                let zeta: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad poly parameter '{tok}'"))?;
                out.push(RankTransform::polynomial(zeta).map_err(|e| e.to_string())?);
            }
        } else if part == "wilcoxon" || part == "identity" {
            out.push(RankTransform::wilcoxon());
        } else if part == "identity-normalized" {
            out.push(RankTransform::identity_normalized());
        } else {
            return Err(format!(
                "unknown transform '{part}' (expect stephenson:Z[,Z..], poly:Z[,Z..], \
                 wilcoxon, identity-normalized)"
            ));
        }
    }
    if out.is_empty() {
        return Err("no transforms given".into());
    }
    Ok(out)
}

pub fn transforms_label(ts: &[RankTransform]) -> String {
    ts.iter().map(|t| t.label()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_mixed_lists() {
        let ts = parse_transforms("stephenson:2,6;poly:10").unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(transforms_label(&ts), "stephenson:2,stephenson:6,poly:10");
        assert!(parse_transforms("nope:1").is_err());
        assert!(parse_transforms("stephenson:1").is_err());
    }
}
