//! The experimental dataset: per-unit treatment indicator, outcome, and
//! optional stratum label, held in a fixed analysis order.
//!
//! Ties in outcomes are broken by position, so the unit order must itself be
//! random for rank statistics to be distribution-free. `Dataset::ingest`
//! applies one seeded shuffle at load; that order is then fixed for the whole
//! analysis — every statistic, every Monte-Carlo draw, every inversion.
//!
//! Strata in which all units are treated or all are control carry no
//! randomization information. They are excluded from every statistic (with a
//! warning) but still count toward the hypothesis index: treated units in an
//! all-treated stratum absorb hypothesized large-effect slots for free, which
//! the optimizers account for via [`Dataset::absorbed_slots`].

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nulldist::{DesignSpec, StratumSize};
use crate::seeds;

/// One experimental unit as read from input.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: String,
    pub treated: bool,
    pub outcome: f64,
    pub stratum: Option<String>,
}

/// A stratum usable for rank statistics: its member indices (analysis order)
/// and treated count.
#[derive(Debug, Clone)]
pub struct Stratum {
    pub label: String,
    /// Unit indices in analysis order.
    pub members: Vec<usize>,
    pub n1: usize,
}

impl Stratum {
    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn n0(&self) -> usize {
        self.members.len() - self.n1
    }
}

/// A validated dataset in analysis order.
#[derive(Debug, Clone)]
pub struct Dataset {
    units: Vec<UnitRecord>,
    /// Strata with at least one treated and one control unit, in first-seen
    /// label order.
    active: Vec<Stratum>,
    /// Treated units living in all-treated strata (excluded from statistics).
    absorbed_slots: usize,
    warnings: Vec<String>,
}

impl Dataset {
    /// Validate, shuffle into analysis order with the seed's tie-break
    /// sub-stream, and group by stratum.
    pub fn ingest(records: Vec<UnitRecord>, master_seed: u64) -> Result<Self> {
        let mut records = records;
        let mut rng = seeds::rng(master_seed, seeds::TIE_SHUFFLE, 0);
        records.shuffle(&mut rng);
        Self::from_analysis_order(records)
    }

    /// Build a dataset treating the given record order as the analysis order
    /// (no shuffle). Callers are responsible for the order being exchangeable
    /// when outcomes contain ties.
    pub fn from_analysis_order(records: Vec<UnitRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyGroup);
        }
        for (i, r) in records.iter().enumerate() {
            if !r.outcome.is_finite() {
                return Err(Error::Invalid(format!(
                    "unit {} (row {}): outcome must be finite, got {}",
                    r.id, i, r.outcome
                )));
            }
        }

        // group by stratum label, first-seen order; a missing label means CRE
        let mut labels: Vec<String> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, r) in records.iter().enumerate() {
            let label = r.stratum.clone().unwrap_or_default();
            match labels.iter().position(|l| *l == label) {
                Some(g) => groups[g].push(i),
                None => {
                    labels.push(label);
                    groups.push(vec![i]);
                }
            }
        }

        let mut active = Vec::new();
        let mut warnings = Vec::new();
        let mut absorbed_slots = 0usize;
        for (label, members) in labels.into_iter().zip(groups) {
            let n1 = members.iter().filter(|&&i| records[i].treated).count();
            let n = members.len();
            if n1 == 0 {
                warnings.push(format!(
                    "stratum '{label}' has no treated units; excluded from statistics"
                ));
            } else if n1 == n {
                warnings.push(format!(
                    "stratum '{label}' has no control units; excluded from statistics"
                ));
                absorbed_slots += n1;
            } else {
                active.push(Stratum { label, members, n1 });
            }
        }
        if active.is_empty() {
            return Err(Error::InvalidDesign(
                "no stratum has both treated and control units".into(),
            ));
        }

        Ok(Dataset {
            units: records,
            active,
            absorbed_slots,
            warnings,
        })
    }

    pub fn units(&self) -> &[UnitRecord] {
        &self.units
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    /// Total treated units, including those in excluded strata; this is the
    /// range of the hypothesis index k for the treated group.
    pub fn n_treated(&self) -> usize {
        self.units.iter().filter(|u| u.treated).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Strata usable for statistics.
    pub fn strata(&self) -> &[Stratum] {
        &self.active
    }

    /// Hypothesized large-effect slots absorbed for free by all-treated
    /// excluded strata.
    pub fn absorbed_slots(&self) -> usize {
        self.absorbed_slots
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// True when the usable design is a single completely randomized stratum
    /// and no units were excluded.
    pub fn is_cre(&self) -> bool {
        self.active.len() == 1 && self.active[0].members.len() == self.units.len()
    }

    /// Design over the active strata.
    pub fn design(&self) -> DesignSpec {
        DesignSpec::stratified(
            self.active
                .iter()
                .map(|s| StratumSize {
                    n: s.n(),
                    n1: s.n1,
                })
                .collect(),
        )
        .expect("active strata are non-degenerate by construction")
    }

    /// Treatment indicators in analysis order.
    pub fn assignments(&self) -> Vec<bool> {
        self.units.iter().map(|u| u.treated).collect()
    }

    /// Outcomes in analysis order.
    pub fn outcomes(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.outcome).collect()
    }

    /// Switch treatment labels and negate outcomes, mapping control-group
    /// hypotheses onto the treated-group machinery. Involutive. The analysis
    /// order is kept, so ranks stay comparable across the flip.
    pub fn flipped(&self) -> Result<Self> {
        let records = self
            .units
            .iter()
            .map(|u| UnitRecord {
                id: u.id.clone(),
                treated: !u.treated,
                outcome: -u.outcome,
                stratum: u.stratum.clone(),
            })
            .collect();
        Self::from_analysis_order(records)
    }

    /// Negate outcomes, turning "effects exceed c" alternatives into
    /// "effects fall below c" ones (thresholds negate alongside).
    pub fn negated_outcomes(&self) -> Result<Self> {
        let records = self
            .units
            .iter()
            .map(|u| UnitRecord {
                id: u.id.clone(),
                treated: u.treated,
                outcome: -u.outcome,
                stratum: u.stratum.clone(),
            })
            .collect();
        Self::from_analysis_order(records)
    }
}

/// Convenience constructor for tests and programmatic use: a CRE in the given
/// (pre-shuffled) order.
pub fn cre_dataset(z: &[bool], y: &[f64]) -> Result<Dataset> {
    if z.len() != y.len() {
        return Err(Error::LengthMismatch(z.len(), y.len()));
    }
    let records = z
        .iter()
        .zip(y)
        .enumerate()
        .map(|(i, (&treated, &outcome))| UnitRecord {
            id: format!("u{i}"),
            treated,
            outcome,
            stratum: None,
        })
        .collect();
    Dataset::from_analysis_order(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, treated: bool, outcome: f64, stratum: Option<&str>) -> UnitRecord {
        UnitRecord {
            id: id.into(),
            treated,
            outcome,
            stratum: stratum.map(String::from),
        }
    }

    #[test]
    fn cre_dataset_counts() {
        let d = cre_dataset(&[true, true, false, false], &[4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!(d.is_cre());
        assert_eq!(d.n_treated(), 2);
        assert_eq!(d.design().strata().len(), 1);
    }

    #[test]
    fn shuffle_is_seed_deterministic() {
        let records: Vec<UnitRecord> = (0..10)
            .map(|i| rec(&format!("u{i}"), i % 2 == 0, i as f64, None))
            .collect();
        let a = Dataset::ingest(records.clone(), 11).unwrap();
        let b = Dataset::ingest(records.clone(), 11).unwrap();
        let c = Dataset::ingest(records, 12).unwrap();
        let ids = |d: &Dataset| d.units().iter().map(|u| u.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn degenerate_strata_are_excluded_with_warning() {
        let records = vec![
            rec("a", true, 1.0, Some("s1")),
            rec("b", false, 2.0, Some("s1")),
            rec("c", true, 3.0, Some("s2")),
            rec("d", true, 4.0, Some("s2")),
            rec("e", false, 5.0, Some("s3")),
        ];
        let d = Dataset::from_analysis_order(records).unwrap();
        assert_eq!(d.strata().len(), 1);
        assert_eq!(d.warnings().len(), 2);
        assert_eq!(d.absorbed_slots(), 2);
        assert_eq!(d.n_treated(), 3);
    }

    #[test]
    fn flip_is_involutive() {
        let d = cre_dataset(&[true, false], &[2.0, 5.0]).unwrap();
        let f = d.flipped().unwrap();
        assert_eq!(f.assignments(), vec![false, true]);
        assert_eq!(f.outcomes(), vec![-2.0, -5.0]);
        let ff = f.flipped().unwrap();
        assert_eq!(ff.assignments(), d.assignments());
        assert_eq!(ff.outcomes(), d.outcomes());
    }

    #[test]
    fn nonfinite_outcome_rejected() {
        let r = vec![rec("a", true, f64::NAN, None), rec("b", false, 0.0, None)];
        assert!(Dataset::from_analysis_order(r).is_err());
    }
}
