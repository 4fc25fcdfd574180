//! Acceptance suite: exhaustive oracle certification of the inference
//! machinery on small designs. One test per criterion; each prints a
//! PASS line on success (visible with `--nocapture`).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use teq::cre;
use teq::data::{cre_dataset, Dataset, UnitRecord};
use teq::intervals::candidate_breakpoints;
use teq::nulldist::{build_joint_null, build_null, DesignSpec, NullMode, StratumSize};
use teq::ranks::RankTransform;
use teq::sre::{
    self, allocate_minimax, Exactness, MinimaxInstance, SolverMode, SreSolver, StratifiedSpec,
    WeightScheme,
};
use teq_oracle::{brute_allocation_sre, brute_infimum_cre, brute_infimum_multi, brute_null};

/// Outcomes on a half-integer lattice so ties occur and tie-breaking is
/// exercised.
fn lattice_outcomes(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| f64::from(rng.random_range(0..=9i32)) / 2.0).collect()
}

fn distinct_outcomes(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    y.sort_by(|a, b| a.partial_cmp(b).unwrap());
    y.dedup();
    while y.len() < n {
        y.push(y.last().unwrap() + rng.random_range(0.1..1.0));
    }
    y
}

fn cre_assignment(n: usize, n1: usize) -> Vec<bool> {
    (0..n).map(|i| i < n1).collect()
}

/// Criterion 1: on every CRE design with n <= 8, every k, every candidate
/// threshold, and the transforms {wilcoxon, stephenson 2..4}, the production
/// p-value (closed-form imputation) equals the brute-force-infimum p-value
/// exactly.
#[test]
fn criterion_1_imputation_oracle_equivalence() {
    let transforms = [
        RankTransform::wilcoxon(),
        RankTransform::stephenson(2).unwrap(),
        RankTransform::stephenson(3).unwrap(),
        RankTransform::stephenson(4).unwrap(),
    ];
    let mut cases = 0u64;
    for n in 2..=8usize {
        for n1 in 1..n {
            let z = cre_assignment(n, n1);
            let design = DesignSpec::cre(n, n1).unwrap();
            for (variant, y) in [
                distinct_outcomes(n, 1000 + (n * 10 + n1) as u64),
                lattice_outcomes(n, 2000 + (n * 10 + n1) as u64),
            ]
            .iter()
            .enumerate()
            {
                let data = cre_dataset(&z, y).unwrap();
                let candidates = candidate_breakpoints(&data);
                for t in &transforms {
                    let nd = build_null(
                        &design,
                        NullMode::exact(),
                        cre::rank_sum_evaluator(t, y).unwrap(),
                    )
                    .unwrap();
                    for k in 0..=n1 {
                        for &c in &candidates {
                            let production = cre::pvalue_single(&z, y, k, c, t, &nd).unwrap();
                            let brute = nd.tail_probability(
                                brute_infimum_cre(&z, y, k, c, t).unwrap(),
                            );
                            assert_eq!(
                                production, brute,
                                "n={n} n1={n1} variant={variant} t={} k={k} c={c}",
                                t.label()
                            );
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    println!("ACCEPTANCE criterion 1 (imputation oracle equivalence, {cases} cases): PASS");
}

/// Criterion 2: the calibrated-minimum-p route and the -tbar combined
/// statistic route produce identical p-values on every enumerable CRE design
/// with n <= 6, every (k, c) on the candidate grid, for H = 2 and H = 3;
/// additionally the closed-form imputation attains the brute-force optimum of
/// the combined statistic itself.
#[test]
fn criterion_2_min_p_equals_neg_tbar() {
    let sets: Vec<Vec<RankTransform>> = vec![
        vec![
            RankTransform::wilcoxon(),
            RankTransform::stephenson(3).unwrap(),
        ],
        vec![
            RankTransform::wilcoxon(),
            RankTransform::stephenson(2).unwrap(),
            RankTransform::stephenson(3).unwrap(),
        ],
    ];
    let mut cases = 0u64;
    for n in 2..=6usize {
        for n1 in 1..n {
            let z = cre_assignment(n, n1);
            let design = DesignSpec::cre(n, n1).unwrap();
            for y in [
                distinct_outcomes(n, 3000 + (n * 10 + n1) as u64),
                lattice_outcomes(n, 4000 + (n * 10 + n1) as u64),
            ] {
                let data = cre_dataset(&z, &y).unwrap();
                let candidates = candidate_breakpoints(&data);
                for transforms in &sets {
                    let joint = build_joint_null(
                        &design,
                        NullMode::exact(),
                        cre::rank_sum_vector_evaluator(transforms, &y).unwrap(),
                    )
                    .unwrap();
                    for k in 0..=n1 {
                        for &c in &candidates {
                            let a =
                                cre::pvalue_min_calibrated(&z, &y, k, c, transforms, &joint)
                                    .unwrap();
                            let b =
                                cre::pvalue_combined_neg_tbar(&z, &y, k, c, transforms, &joint)
                                    .unwrap();
                            assert_eq!(a, b, "n={n} n1={n1} H={} k={k} c={c}", transforms.len());
                            // the shared imputation attains the brute optimum
                            // of -tbar over the whole constraint set
                            let brute_neg_tbar = brute_infimum_multi(
                                &z,
                                &y,
                                k,
                                c,
                                transforms,
                                |stats| -joint.tbar(stats),
                            )
                            .unwrap();
                            let b_brute = joint
                                .neg_tbar_null()
                                .tail_probability(brute_neg_tbar);
                            assert_eq!(
                                b, b_brute,
                                "brute -tbar mismatch: n={n} n1={n1} k={k} c={c}"
                            );
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    println!("ACCEPTANCE criterion 2 (min-p = -tbar identity, {cases} cases): PASS");
}

/// All stratum shapes with 2 <= n_s <= 6 and both groups nonempty.
fn stratum_types() -> Vec<StratumSize> {
    let mut out = Vec::new();
    for n in 2..=6usize {
        for n1 in 1..n {
            out.push(StratumSize { n, n1 });
        }
    }
    out
}

/// Multisets of 1..=max_s stratum types (order is irrelevant to the
/// optimizers): nondecreasing index sequences over the type list.
fn designs_up_to(max_s: usize) -> Vec<Vec<StratumSize>> {
    let types = stratum_types();
    fn rec(
        n_types: usize,
        max_s: usize,
        start: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if !current.is_empty() {
            out.push(current.clone());
        }
        if current.len() == max_s {
            return;
        }
        for t in start..n_types {
            current.push(t);
            rec(n_types, max_s, t, current, out);
            current.pop();
        }
    }
    let mut idx = Vec::new();
    let mut out = Vec::new();
    rec(types.len(), max_s, 0, &mut idx, &mut out);
    out.into_iter()
        .map(|d| d.into_iter().map(|t| types[t]).collect())
        .collect()
}

fn sre_dataset(sizes: &[StratumSize], seed: u64) -> Dataset {
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (s, st) in sizes.iter().enumerate() {
        for i in 0..st.n {
            records.push(UnitRecord {
                id: format!("s{s}u{i}"),
                treated: i < st.n1,
                outcome: f64::from(rng.random_range(0..=9i32)) / 2.0,
                stratum: Some(format!("s{s}")),
            });
        }
    }
    Dataset::from_analysis_order(records).unwrap()
}

/// Criterion 3: dynamic programming and exact minimax match brute-force
/// allocation minima on every SRE design with S <= 4 and n_s <= 6, for every
/// feasible budget; the LP relaxation never exceeds the exact objective, and
/// the resulting conservative p-value never undercuts the exact one.
#[test]
fn criterion_3_knapsack_exactness() {
    let single =
        StratifiedSpec::single(RankTransform::polynomial(2.0).unwrap(), WeightScheme::Scheme1)
            .unwrap();
    let atc = StratifiedSpec::aggregate_then_combine(
        vec![
            RankTransform::polynomial(2.0).unwrap(),
            RankTransform::polynomial(6.0).unwrap(),
        ],
        vec![WeightScheme::Scheme1],
    )
    .unwrap();

    let mut dp_cases = 0u64;
    let mut mm_cases = 0u64;
    let mut p_cases = 0u64;
    for (idx, sizes) in designs_up_to(4).into_iter().enumerate() {
        let data = sre_dataset(&sizes, 7000 + idx as u64);
        let caps: Vec<usize> = sizes.iter().map(|s| s.n1).collect();
        let max_k: usize = caps.iter().sum();
        let c = 0.5;
        let table = sre::build_infimum_table(&data, c, atc.transforms()).unwrap();
        let weights = atc.weight_matrix(&sizes).unwrap();
        let moments = sre::sre_moments(&atc, &sizes).unwrap();

        for k in 0..=max_k {
            // separable single-statistic objective: DP vs exhaustive
            let (dp_obj, _) =
                sre::optimized_statistic(&single, &sizes, &table, k, SreSolver::Dp).unwrap();
            let brute_obj = brute_allocation_sre(&caps, k, |alloc| {
                let mut acc = 0.0;
                for (s, &j) in alloc.iter().enumerate() {
                    acc += weights[0][s] * table.values()[s][j][0];
                }
                acc
            })
            .unwrap();
            assert_eq!(dp_obj, brute_obj, "dp vs brute: design {idx} k={k}");
            dp_cases += 1;

            // minimax objective: exact solver vs exhaustive, LP below both
            let inst = MinimaxInstance {
                table: table.values(),
                weights: &weights,
                mu: &moments.mu,
                sigma: &moments.sigma,
            };
            let exact = allocate_minimax(&inst, k, SolverMode::Exact).unwrap();
            let brute_mm = brute_allocation_sre(&caps, k, |alloc| {
                let mut best = f64::NEG_INFINITY;
                for h in 0..moments.mu.len() {
                    let mut acc = 0.0;
                    for (s, &j) in alloc.iter().enumerate() {
                        acc += weights[h][s] * table.values()[s][j][h];
                    }
                    let v = (acc - moments.mu[h]) / moments.sigma[h];
                    if v > best {
                        best = v;
                    }
                }
                best
            })
            .unwrap();
            assert_eq!(
                exact.objective, brute_mm,
                "minimax vs brute: design {idx} k={k}"
            );
            let lp = allocate_minimax(&inst, k, SolverMode::LpRelaxation).unwrap();
            assert!(
                lp.objective <= exact.objective + 1e-9,
                "lp {} > exact {}: design {idx} k={k}",
                lp.objective,
                exact.objective
            );
            mm_cases += 1;
        }

        // conservative p-values on enumerable designs
        let design = data.design();
        if design.assignment_count() <= 3_000 {
            let nd = build_null(
                &design,
                NullMode::exact(),
                sre::null_evaluator(&atc, &sizes).unwrap(),
            )
            .unwrap();
            for k in [0, max_k / 2, max_k] {
                let exact =
                    sre::pvalue_sre(&data, &atc, k, c, &nd, SreSolver::BranchAndBound).unwrap();
                let lp = sre::pvalue_sre(&data, &atc, k, c, &nd, SreSolver::LpRelaxation).unwrap();
                assert!(
                    lp.p >= exact.p,
                    "p_lp {} < p_exact {}: design {idx} k={k}",
                    lp.p,
                    exact.p
                );
                assert_eq!(lp.exactness, Exactness::ConservativeLowerBound);
                p_cases += 1;
            }
        }
    }

    // branch-and-bound proper (allocation count above the brute cap) against
    // exhaustive enumeration on a handful of larger instances
    let mut bnb_cases = 0u64;
    for seed in 0..3u64 {
        let sizes = vec![StratumSize { n: 35, n1: 17 }; 4];
        let data = sre_dataset(&sizes, 9100 + seed);
        let table = sre::build_infimum_table(&data, 0.5, atc.transforms()).unwrap();
        let weights = atc.weight_matrix(&sizes).unwrap();
        let moments = sre::sre_moments(&atc, &sizes).unwrap();
        let inst = MinimaxInstance {
            table: table.values(),
            weights: &weights,
            mu: &moments.mu,
            sigma: &moments.sigma,
        };
        for k in [5, 23, 41] {
            let bnb = allocate_minimax(&inst, k, SolverMode::Exact).unwrap();
            let brute = allocate_minimax(&inst, k, SolverMode::BruteForce).unwrap();
            assert_eq!(
                bnb.objective, brute.objective,
                "bnb vs brute: seed {seed} k={k}"
            );
            bnb_cases += 1;
        }
    }

    println!(
        "ACCEPTANCE criterion 3 (knapsack exactness: {dp_cases} dp, {mm_cases} minimax, \
         {bnb_cases} bnb, {p_cases} p-value cases): PASS"
    );
}

/// Criterion 7: exact null laws of every statistic family are identical
/// multisets across three distinct reference outcome vectors on the (6,3)
/// CRE and a 2x(4,2) SRE.
#[test]
fn criterion_7_distribution_freeness() {
    let refs_cre: [Vec<f64>; 3] = [
        distinct_outcomes(6, 51),
        lattice_outcomes(6, 52),
        vec![7.0, 7.0, 7.0, 1.0, 1.0, 2.0],
    ];
    let design = DesignSpec::cre(6, 3).unwrap();

    // single raw statistics
    for t in [
        RankTransform::wilcoxon(),
        RankTransform::stephenson(3).unwrap(),
    ] {
        let laws: Vec<Vec<f64>> = refs_cre
            .iter()
            .map(|y| {
                build_null(
                    &design,
                    NullMode::exact(),
                    cre::rank_sum_evaluator(&t, y).unwrap(),
                )
                .unwrap()
                .values()
                .to_vec()
            })
            .collect();
        assert_eq!(laws[0], laws[1], "{}", t.label());
        assert_eq!(laws[0], laws[2], "{}", t.label());
        // production enumeration cross-checked against the naive oracle
        let oracle = brute_null(
            &design,
            cre::rank_sum_evaluator(&t, &refs_cre[0]).unwrap(),
        )
        .unwrap();
        assert_eq!(laws[0], oracle.values());
    }

    // combined -tbar law
    let transforms = vec![
        RankTransform::wilcoxon(),
        RankTransform::stephenson(3).unwrap(),
    ];
    let neg_tbar_laws: Vec<Vec<f64>> = refs_cre
        .iter()
        .map(|y| {
            build_joint_null(
                &design,
                NullMode::exact(),
                cre::rank_sum_vector_evaluator(&transforms, y).unwrap(),
            )
            .unwrap()
            .neg_tbar_null()
            .values()
            .to_vec()
        })
        .collect();
    assert_eq!(neg_tbar_laws[0], neg_tbar_laws[1]);
    assert_eq!(neg_tbar_laws[0], neg_tbar_laws[2]);

    // max-standardized law
    let max_std_laws: Vec<Vec<f64>> = refs_cre
        .iter()
        .map(|y| {
            build_null(
                &design,
                NullMode::exact(),
                cre::max_std_evaluator_with_reference(&transforms, &design, y).unwrap(),
            )
            .unwrap()
            .values()
            .to_vec()
        })
        .collect();
    assert_eq!(max_std_laws[0], max_std_laws[1]);
    assert_eq!(max_std_laws[0], max_std_laws[2]);

    // stratified families on a 2x(4,2) SRE, across three reference vectors
    let sizes = vec![StratumSize { n: 4, n1: 2 }, StratumSize { n: 4, n1: 2 }];
    let sre_design = DesignSpec::stratified(sizes.clone()).unwrap();
    let refs_sre: [Vec<f64>; 3] = [
        distinct_outcomes(8, 55),
        lattice_outcomes(8, 56),
        vec![3.0, 3.0, 1.0, 9.0, 2.0, 2.0, 2.0, 5.0],
    ];
    let polys = vec![
        RankTransform::polynomial(2.0).unwrap(),
        RankTransform::polynomial(6.0).unwrap(),
    ];
    let specs = vec![
        StratifiedSpec::single(polys[0].clone(), WeightScheme::Scheme1).unwrap(),
        StratifiedSpec::aggregate_then_combine(polys.clone(), vec![WeightScheme::Scheme1])
            .unwrap(),
        StratifiedSpec::combine_then_aggregate(polys.clone(), WeightScheme::Scheme1).unwrap(),
    ];
    for spec in &specs {
        let laws: Vec<Vec<f64>> = refs_sre
            .iter()
            .map(|y| {
                build_null(
                    &sre_design,
                    NullMode::exact(),
                    sre::null_evaluator_with_reference(spec, &sizes, y).unwrap(),
                )
                .unwrap()
                .values()
                .to_vec()
            })
            .collect();
        assert_eq!(laws[0], laws[1], "{:?}", spec.combination());
        assert_eq!(laws[0], laws[2], "{:?}", spec.combination());
        // production enumeration cross-checked against the naive oracle
        let oracle = brute_null(
            &sre_design,
            sre::null_evaluator_with_reference(spec, &sizes, &refs_sre[0]).unwrap(),
        )
        .unwrap();
        assert_eq!(laws[0], oracle.values());
    }

    println!("ACCEPTANCE criterion 7 (distribution-freeness): PASS");
}
