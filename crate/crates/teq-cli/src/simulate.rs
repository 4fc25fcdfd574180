//! Simulation harness: replicated synthetic experiments comparing single
//! rank statistics with the combined methods, reporting per-quantile medians
//! of the lower prediction bounds.
//!
//! Control potential outcomes are standard normal; treated potential
//! outcomes are normal with mean 2 and the given sigma. Each replication
//! draws fresh potential outcomes and a fresh assignment from its own
//! sub-seed, so runs are reproducible and independent of the worker count.

use rand_distr::{Distribution, Normal};

use teq::cre;
use teq::data::{Dataset, UnitRecord};
use teq::exec;
use teq::intervals::{self, Group};
use teq::nulldist::{build_joint_null, build_null, NullMode, StratumSize};
use teq::ranks::RankTransform;
use teq::seeds;
use teq::sre::{self, SreSolver, StratifiedSpec, WeightScheme};

use crate::config::{Solver, Weights};
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scenario {
    /// Completely randomized, half treated.
    Cre,
    /// Equal strata: 10 strata of n/10 units.
    Sre1,
    /// Many small strata of 10 units.
    Sre2,
    /// Mixed strata of sizes 10, 20, and 50.
    Sre3,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Cre => "cre",
            Scenario::Sre1 => "sre1",
            Scenario::Sre2 => "sre2",
            Scenario::Sre3 => "sre3",
        }
    }

    pub fn default_n(&self) -> usize {
        match self {
            Scenario::Cre => 100,
            _ => 1000,
        }
    }

    /// Stratum sizes for a total of `n` units, half treated within each
    /// stratum. The mixed scenario scales the 33:16:7 count ratio of
    /// size-10/20/50 strata to `n` (exact at n = 1000).
    pub fn strata(&self, n: usize) -> Result<Vec<StratumSize>, Failure> {
        let half = |n: usize| StratumSize { n, n1: n / 2 };
        match self {
            Scenario::Cre => {
                if n < 2 || n % 2 != 0 {
                    return Err(Failure::validation("cre scenario needs even n".to_string()));
                }
                Ok(vec![half(n)])
            }
            Scenario::Sre1 => {
                if n % 20 != 0 {
                    return Err(Failure::validation(
                        "sre1 scenario needs n divisible by 20".to_string(),
                    ));
                }
                Ok(vec![half(n / 10); 10])
            }
            Scenario::Sre2 => {
                if n % 10 != 0 {
                    return Err(Failure::validation(
                        "sre2 scenario needs n divisible by 10".to_string(),
                    ));
                }
                Ok(vec![half(10); n / 10])
            }
            Scenario::Sre3 => {
                if n % 10 != 0 {
                    return Err(Failure::validation(
                        "sre3 scenario needs n divisible by 10".to_string(),
                    ));
                }
                let c50 = ((7 * n) as f64 / 1000.0).round() as usize;
                let c20 = ((16 * n) as f64 / 1000.0).round() as usize;
                let used = 50 * c50 + 20 * c20;
                if used > n {
                    return Err(Failure::validation(format!(
                        "sre3 scenario needs n >= {used} for its mixed strata"
                    )));
                }
                let c10 = (n - used) / 10;
                if c10 == 0 && (c20 > 0 || c50 > 0) && n >= 30 {
                    // keep at least one small stratum so sizes stay mixed
                    return Err(Failure::validation(
                        "sre3 scenario leaves no size-10 strata at this n".to_string(),
                    ));
                }
                let mut sizes = vec![half(10); c10];
                sizes.extend(vec![half(20); c20]);
                sizes.extend(vec![half(50); c50]);
                Ok(sizes)
            }
        }
    }
}

pub struct SimulateOpts {
    pub scenario: Scenario,
    pub sigma: f64,
    pub n: Option<usize>,
    pub reps: usize,
    pub alpha: f64,
    pub weights: Weights,
    pub solver: Option<Solver>,
    pub mc_draws: usize,
    pub seed: u64,
}

/// One method in the comparison: a label plus a bound-table computation.
struct MethodSpec {
    label: String,
    kind: MethodKind,
}

enum MethodKind {
    CreSingle(RankTransform),
    CreCombined(Vec<RankTransform>),
    Sre(StratifiedSpec, SreSolver),
}

fn methods(scenario: Scenario, weights: &WeightScheme, solver: SreSolver) -> Vec<MethodSpec> {
    match scenario {
        Scenario::Cre => {
            let singles = [2u32, 6, 10, 30];
            let mut out: Vec<MethodSpec> = singles
                .iter()
                .map(|&z| MethodSpec {
                    label: format!("stephenson:{z}"),
                    kind: MethodKind::CreSingle(RankTransform::stephenson(z).unwrap()),
                })
                .collect();
            out.push(MethodSpec {
                label: "combined".to_string(),
                kind: MethodKind::CreCombined(
                    singles
                        .iter()
                        .map(|&z| RankTransform::stephenson(z).unwrap())
                        .collect(),
                ),
            });
            out
        }
        _ => {
            let zetas = [2.0, 6.0, 10.0];
            let polys: Vec<RankTransform> = zetas
                .iter()
                .map(|&z| RankTransform::polynomial(z).unwrap())
                .collect();
            let mut out: Vec<MethodSpec> = polys
                .iter()
                .zip(&zetas)
                .map(|(t, z)| MethodSpec {
                    label: format!("poly:{z}"),
                    kind: MethodKind::Sre(
                        StratifiedSpec::single(t.clone(), weights.clone()).unwrap(),
                        SreSolver::Dp,
                    ),
                })
                .collect();
            out.push(MethodSpec {
                label: "comb1".to_string(),
                kind: MethodKind::Sre(
                    StratifiedSpec::aggregate_then_combine(polys.clone(), vec![weights.clone()])
                        .unwrap(),
                    solver,
                ),
            });
            out.push(MethodSpec {
                label: "comb2".to_string(),
                kind: MethodKind::Sre(
                    StratifiedSpec::combine_then_aggregate(polys, weights.clone()).unwrap(),
                    SreSolver::Dp,
                ),
            });
            out
        }
    }
}

fn generate_replication(
    sizes: &[StratumSize],
    sigma: f64,
    seed: u64,
    rep: usize,
) -> Dataset {
    let control = Normal::new(0.0, 1.0).unwrap();
    let treated = Normal::new(2.0, sigma).unwrap();
    let mut rng = seeds::rng(seed, seeds::OUTCOMES, rep as u64);
    let design = teq::nulldist::DesignSpec::stratified(sizes.to_vec()).unwrap();
    let mut zrng = seeds::rng(seed, seeds::ASSIGNMENT, rep as u64);
    let z = teq::nulldist::sample_assignment(&design, &mut zrng);

    let mut records = Vec::with_capacity(design.n());
    let mut unit = 0usize;
    for (s, st) in sizes.iter().enumerate() {
        for _ in 0..st.n {
            let y0: f64 = control.sample(&mut rng);
            let y1: f64 = treated.sample(&mut rng);
            let y = if z[unit] { y1 } else { y0 };
            records.push(UnitRecord {
                id: format!("u{unit}"),
                treated: z[unit],
                outcome: y,
                stratum: if sizes.len() > 1 {
                    Some(format!("s{s}"))
                } else {
                    None
                },
            });
            unit += 1;
        }
    }
    Dataset::from_analysis_order(records).unwrap()
}

/// Lower bounds for every treated quantile under one method.
fn method_bounds(
    data: &Dataset,
    method: &MethodKind,
    alpha: f64,
    mc_draws: usize,
    null_seed: u64,
) -> teq::Result<Vec<f64>> {
    let design = data.design();
    let mode = if design.assignment_count() <= 200_000 {
        NullMode::Exact { cap: 200_000 }
    } else {
        NullMode::monte_carlo(mc_draws, null_seed)
    };
    let z = data.assignments();
    let y = data.outcomes();
    let candidates = intervals::candidate_breakpoints(data);
    let n1 = data.n_treated();
    let table = match method {
        MethodKind::CreSingle(t) => {
            let nd = build_null(&design, mode, cre::rank_sum_evaluator(t, &y)?)?;
            let pfun = |k: usize, c: f64| cre::pvalue_single(&z, &y, k, c, t, &nd);
            intervals::simultaneous_bounds(&pfun, n1, Group::Treated, alpha, &candidates)?
        }
        MethodKind::CreCombined(ts) => {
            let joint = build_joint_null(&design, mode, cre::rank_sum_vector_evaluator(ts, &y)?)?;
            let pfun = |k: usize, c: f64| cre::pvalue_min_calibrated(&z, &y, k, c, ts, &joint);
            intervals::simultaneous_bounds(&pfun, n1, Group::Treated, alpha, &candidates)?
        }
        MethodKind::Sre(spec, solver) => {
            let nd = build_null(&design, mode, sre::null_evaluator(spec, design.strata())?)?;
            let pfun = |k: usize, c: f64| {
                sre::pvalue_sre(data, spec, k, c, &nd, *solver).map(|r| r.p)
            };
            intervals::simultaneous_bounds(&pfun, n1, Group::Treated, alpha, &candidates)?
        }
    };
    Ok(table.entries.iter().map(|e| e.bound).collect())
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub struct SimRow {
    pub scenario: &'static str,
    pub method: String,
    pub k: usize,
    pub median_lower_bound: f64,
}

pub fn run(opts: &SimulateOpts) -> Result<Vec<SimRow>, Failure> {
    let n = opts.n.unwrap_or_else(|| opts.scenario.default_n());
    let sizes = opts.scenario.strata(n)?;
    let scheme = opts.weights.scheme();
    let solver = opts
        .solver
        .map(|s| s.sre_solver())
        .unwrap_or(SreSolver::BranchAndBound);
    let specs = methods(opts.scenario, &scheme, solver);
    let n1: usize = sizes.iter().map(|s| s.n1).sum();

    // per replication, per method: bounds over k = 1..=n1
    let all: Vec<teq::Result<Vec<Vec<f64>>>> = exec::map_indexed(opts.reps, |rep| {
        let data = generate_replication(&sizes, opts.sigma, opts.seed, rep);
        let null_seed = seeds::derive(opts.seed, seeds::REPLICATION, rep as u64);
        specs
            .iter()
            .map(|m| method_bounds(&data, &m.kind, opts.alpha, opts.mc_draws, null_seed))
            .collect()
    });
    let all = all
        .into_iter()
        .collect::<teq::Result<Vec<_>>>()
        .map_err(Failure::from_teq)?;

    let mut rows = Vec::new();
    for (m, spec) in specs.iter().enumerate() {
        for k in 1..=n1 {
            let mut vals: Vec<f64> = all.iter().map(|rep| rep[m][k - 1]).collect();
            rows.push(SimRow {
                scenario: opts.scenario.label(),
                method: spec.label.clone(),
                k,
                median_lower_bound: median(&mut vals),
            });
        }
    }
    Ok(rows)
}
