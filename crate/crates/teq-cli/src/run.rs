//! Shared analysis engine: null construction and method dispatch for the
//! `test` and `bounds` subcommands.

use teq::cre;
use teq::data::Dataset;
use teq::intervals::{self, BoundsTable, Group};
use teq::nulldist::{
    build_joint_null, build_null, DesignSpec, JointNull, NullDistribution, NullMode,
    DEFAULT_ENUMERATION_CAP,
};
use teq::ranks::RankTransform;
use teq::seeds;
use teq::sre::{self, Exactness, SreSolver, StratifiedSpec};

use crate::config::{Method, NullModeArg, Solver, Weights};
use crate::Failure;

pub struct EngineConfig {
    pub method: Method,
    pub transforms: Vec<RankTransform>,
    pub weights: Weights,
    pub solver: Option<Solver>,
    pub null_mode: NullModeArg,
    pub mc_draws: usize,
    pub seed: u64,
}

/// A prepared analysis: the dataset-independent null laws are built once and
/// reused for every hypothesis `(k, c)`.
pub enum Engine {
    CreSingle {
        transform: RankTransform,
        nd: NullDistribution,
    },
    CreMinP {
        transforms: Vec<RankTransform>,
        joint: JointNull,
    },
    CreMaxStd {
        transforms: Vec<RankTransform>,
        std: cre::Standardization,
        nd: NullDistribution,
    },
    Sre {
        spec: StratifiedSpec,
        nd: NullDistribution,
        solver: SreSolver,
    },
}

fn null_mode(cfg: &EngineConfig, design: &DesignSpec) -> NullMode {
    match cfg.null_mode {
        NullModeArg::Exact => NullMode::Exact {
            cap: DEFAULT_ENUMERATION_CAP,
        },
        NullModeArg::Mc => NullMode::monte_carlo(
            cfg.mc_draws,
            seeds::derive(cfg.seed, seeds::NULL_DRAW, 0),
        ),
        NullModeArg::Auto => {
            if design.assignment_count() <= DEFAULT_ENUMERATION_CAP {
                NullMode::Exact {
                    cap: DEFAULT_ENUMERATION_CAP,
                }
            } else {
                NullMode::monte_carlo(
                    cfg.mc_draws,
                    seeds::derive(cfg.seed, seeds::NULL_DRAW, 0),
                )
            }
        }
    }
}

impl Engine {
    pub fn build(cfg: &EngineConfig, data: &Dataset) -> Result<Engine, Failure> {
        let design = data.design();
        let mode = null_mode(cfg, &design);
        let is_cre = data.is_cre();
        let ts = &cfg.transforms;

        match cfg.method {
            Method::Single if is_cre => {
                if ts.len() != 1 {
                    return Err(Failure::validation(
                        "method single takes exactly one transform".to_string(),
                    ));
                }
                let nd = build_null(
                    &design,
                    mode,
                    cre::rank_sum_evaluator(&ts[0], &data.outcomes()).map_err(Failure::from_teq)?,
                )
                .map_err(Failure::from_teq)?;
                Ok(Engine::CreSingle {
                    transform: ts[0].clone(),
                    nd,
                })
            }
            Method::MinP => {
                if !is_cre {
                    return Err(Failure::validation(
                        "min_p requires a completely randomized design (no strata); \
                         use comb1 or comb2 on stratified data"
                            .to_string(),
                    ));
                }
                let joint = build_joint_null(
                    &design,
                    mode,
                    cre::rank_sum_vector_evaluator(ts, &data.outcomes())
                        .map_err(Failure::from_teq)?,
                )
                .map_err(Failure::from_teq)?;
                Ok(Engine::CreMinP {
                    transforms: ts.clone(),
                    joint,
                })
            }
            Method::MaxStd if is_cre => {
                let std = cre::standardization(ts, &design).map_err(Failure::from_teq)?;
                let nd = build_null(
                    &design,
                    mode,
                    cre::max_std_evaluator_with_reference(ts, &design, &data.outcomes())
                        .map_err(Failure::from_teq)?,
                )
                .map_err(Failure::from_teq)?;
                Ok(Engine::CreMaxStd {
                    transforms: ts.clone(),
                    std,
                    nd,
                })
            }
            // everything else routes through the stratified machinery
            method => {
                let scheme = cfg.weights.scheme();
                let (spec, solver) = match method {
                    Method::Single => (
                        StratifiedSpec::single(ts[0].clone(), scheme)
                            .map_err(Failure::from_teq)?,
                        cfg.solver.map(|s| s.sre_solver()).unwrap_or(SreSolver::Dp),
                    ),
                    Method::MaxStd | Method::Comb1 => {
                        if method == Method::Comb1 && ts.len() < 2 {
                            return Err(Failure::validation(
                                "comb1 requires at least two transforms".to_string(),
                            ));
                        }
                        (
                            StratifiedSpec::aggregate_then_combine(ts.clone(), vec![scheme])
                                .map_err(Failure::from_teq)?,
                            cfg.solver
                                .map(|s| s.sre_solver())
                                .unwrap_or(SreSolver::BranchAndBound),
                        )
                    }
                    Method::Comb2 => {
                        if ts.len() < 2 {
                            return Err(Failure::validation(
                                "comb2 requires at least two transforms".to_string(),
                            ));
                        }
                        (
                            StratifiedSpec::combine_then_aggregate(ts.clone(), scheme)
                                .map_err(Failure::from_teq)?,
                            cfg.solver.map(|s| s.sre_solver()).unwrap_or(SreSolver::Dp),
                        )
                    }
                    Method::MinP => unreachable!("handled above"),
                };
                let nd = build_null(
                    &design,
                    mode,
                    sre::null_evaluator(&spec, design.strata()).map_err(Failure::from_teq)?,
                )
                .map_err(Failure::from_teq)?;
                Ok(Engine::Sre { spec, nd, solver })
            }
        }
    }

    /// p-value for the treated-group hypothesis `(k, c)` plus an exactness
    /// label for reporting.
    pub fn pvalue(&self, data: &Dataset, k: usize, c: f64) -> teq::Result<(f64, &'static str)> {
        let z = data.assignments();
        let y = data.outcomes();
        match self {
            Engine::CreSingle { transform, nd } => {
                Ok((cre::pvalue_single(&z, &y, k, c, transform, nd)?, "exact"))
            }
            Engine::CreMinP { transforms, joint } => Ok((
                cre::pvalue_min_calibrated(&z, &y, k, c, transforms, joint)?,
                "exact",
            )),
            Engine::CreMaxStd {
                transforms,
                std,
                nd,
            } => Ok((
                cre::pvalue_combined_max_std(&z, &y, k, c, transforms, std, nd)?,
                "exact",
            )),
            Engine::Sre { spec, nd, solver } => {
                let res = sre::pvalue_sre(data, spec, k, c, nd, *solver)?;
                let label = match res.exactness {
                    Exactness::Exact => "exact",
                    Exactness::ConservativeLowerBound => "conservative",
                };
                Ok((res.p, label))
            }
        }
    }

    /// Simultaneous lower bounds for the treated-group quantiles of `data`.
    pub fn bounds(
        &self,
        data: &Dataset,
        group: Group,
        alpha: f64,
    ) -> Result<BoundsTable, Failure> {
        let candidates = intervals::candidate_breakpoints(data);
        let pfun = |k: usize, c: f64| self.pvalue(data, k, c).map(|(p, _)| p);
        intervals::simultaneous_bounds(&pfun, data.n_treated(), group, alpha, &candidates)
            .map_err(Failure::from_teq)
    }
}

