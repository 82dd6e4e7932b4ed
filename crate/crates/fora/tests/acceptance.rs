//! Acceptance suite: every release criterion, one test each, with the
//! tolerances pinned in code. Run with `--nocapture` to see the PASS line
//! per criterion.

mod common;

use common::random_unit_instance;
use fora::analysis::{
    audit_ceiling, exact_evaluate, general_bound, hardgen, stationary_exact_bound,
    stationary_floor_bound, Arithmetic, ExactOptions, Family,
};
use fora::gamma::{compute_gamma, compute_gamma_in};
use fora::model::Instance;
use fora::policy::{Policy, PolicyKind};
use fora::scalar::Scalar;
use fora::sim::{run_long_run, run_trials, SimOptions};
use num_rational::BigRational;
use std::time::Instant;

fn reference_stationary() -> Instance {
    hardgen(&Family::AonStationary { eps: 0.25 }).unwrap().instance
}

fn reference_general_tight() -> fora::analysis::HardInstance {
    hardgen(&Family::GeneralTight {
        betas: vec![0.5, 1.0],
        rho: 1.0,
        eps: 0.1,
        horizon: 4,
        capacity: 4,
    })
    .unwrap()
}

/// Criterion 1: Per-arrival conditional allocations of the calibrated threshold
/// policy equal `j / (1 + R)` on fuzzed instances, to 1e-12 in floats and
/// 1e-15 in rational arithmetic, within a minute.
#[test]
fn acceptance_01_per_arrival_exactness() {
    let start = Instant::now();
    for seed in 0..50u64 {
        let inst = random_unit_instance(1000 + seed, 4, 4, 3);
        let r = inst.load_summary().r_unit;
        let rep =
            exact_evaluate(&inst, &PolicyKind::ThresholdUnit, &ExactOptions::default()).unwrap();
        for c in &rep.conditionals {
            let expected = f64::from(c.demand) / (1.0 + r);
            assert!(
                (c.mean_alloc - expected).abs() < 1e-12,
                "seed {seed} cell ({}, {}, {}): {} vs {expected}",
                c.group,
                c.slot,
                c.demand,
                c.mean_alloc
            );
        }

        let rational = exact_evaluate(
            &inst,
            &PolicyKind::ThresholdUnit,
            &ExactOptions {
                arithmetic: Arithmetic::Rational,
                ..ExactOptions::default()
            },
        )
        .unwrap();
        let r_exact: BigRational = inst.unit_load_in();
        for c in &rational.conditionals {
            let expected = (BigRational::from_int(u64::from(c.demand))
                / (BigRational::one() + r_exact.clone()))
            .to_f64();
            assert!(
                (c.mean_alloc - expected).abs() < 1e-15,
                "seed {seed} rational cell ({}, {}, {})",
                c.group,
                c.slot,
                c.demand
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!("acceptance 01 per-arrival exactness: PASS ({elapsed:?})");
}

/// Criterion 2: The screened threshold policy hits exactly 1/(1+R_beta) = 0.5 for
/// every group of the late-arrival reference instance; Monte Carlo with a
/// million trials agrees within four standard errors.
#[test]
fn acceptance_02_weighted_guarantee() {
    let hard = reference_general_tight();
    let rep = exact_evaluate(
        &hard.instance,
        &PolicyKind::ThresholdWeighted,
        &ExactOptions::default(),
    )
    .unwrap();
    for row in &rep.rows {
        let fe = row.fe_fr_beta.unwrap();
        assert!((fe - 0.5).abs() < 1e-12, "group {}: {fe}", row.group);
    }
    // Per-arrival law behind the ratio: E[C | arrival] = beta_i * j / (1 + R_beta).
    for c in &rep.conditionals {
        let expected = hard.instance.priority(c.group) * f64::from(c.demand) / 2.0;
        assert!((c.mean_alloc - expected).abs() < 1e-12);
    }

    let policy = Policy::build(PolicyKind::ThresholdWeighted, &hard.instance).unwrap();
    let mc = run_trials(
        &hard.instance,
        &policy,
        &SimOptions {
            trials: 1_000_000,
            seed: 2024,
            ..SimOptions::default()
        },
    );
    for row in &mc.rows {
        let (fe, se) = (row.fe_fr_beta.unwrap(), row.se.unwrap());
        assert!(
            (fe - 0.5).abs() <= 4.0 * se,
            "group {}: {fe} +- {se}",
            row.group
        );
    }
    println!("acceptance 02 weighted guarantee: PASS");
}

/// Criterion 3: Random cyclic blocks on the reference stationary instance: fairness
/// exactly (1 - (1 - R/T)^T)/R = 0.625, per-unit allocation probabilities
/// all 0.9375 matching the closed form, and unit symmetry to 1e-12 for
/// capacities up to 6.
#[test]
fn acceptance_03_rcb_exact_guarantee() {
    let inst = reference_stationary();
    let rep = exact_evaluate(&inst, &PolicyKind::Rcb, &ExactOptions::default()).unwrap();
    let fe = rep.rows[0].fe_fr_beta.unwrap();
    assert!((fe - 0.625).abs() < 1e-12);
    assert!((fe - stationary_exact_bound(1.5, 2)).abs() < 1e-12);

    let units = rep.unit_alloc_prob.as_ref().unwrap();
    // Closed form: q_i (1 - (1 - W)^T) / W with q_i = 3/4, W = 3/4.
    let closed = 0.75 * (1.0 - 0.25f64.powi(2)) / 0.75;
    for row in units {
        assert!((row[0] - 0.9375).abs() < 1e-12);
        assert!((row[0] - closed).abs() < 1e-12);
    }

    for capacity in 2..=6u32 {
        let inst = Instance::time_invariant(
            capacity,
            3,
            &[1.0, 1.0],
            &[
                (1, 1, 0.3),
                (1, capacity.div_ceil(2), 0.15),
                (2, capacity, 0.1),
            ],
        )
        .unwrap();
        let rep = exact_evaluate(&inst, &PolicyKind::Rcb, &ExactOptions::default()).unwrap();
        let units = rep.unit_alloc_prob.as_ref().unwrap();
        for g in 0..2 {
            for pair in units.windows(2) {
                assert!(
                    (pair[0][g] - pair[1][g]).abs() < 1e-12,
                    "K={capacity} group {}",
                    g + 1
                );
            }
        }
    }
    println!("acceptance 03 rcb exact guarantee: PASS");
}

/// Criterion 4: Calibration well-definedness on 1000 fuzzed instances: every table
/// value stays at or above 1/(1+R) and budget rows stay normalized; on
/// small instances the table's budget distribution equals the oracle's.
#[test]
fn acceptance_04_calibration_well_defined() {
    let mut small_checked = 0u32;
    for seed in 0..1000u64 {
        let inst = random_unit_instance(20_000 + seed, 10, 10, 4);
        let table = compute_gamma(&inst).unwrap();
        let floor = 1.0 / (1.0 + table.load_used());
        for t in 1..=inst.horizon() {
            let row_sum: f64 = table.budget_row(t).iter().sum();
            assert!((row_sum - 1.0).abs() <= 1e-9, "seed {seed} t={t}: {row_sum}");
            for j in 1..=inst.capacity() {
                assert!(
                    *table.gamma(t, j) >= floor - 1e-12,
                    "seed {seed} gamma({t},{j}) below 1/(1+R)"
                );
            }
        }
        if inst.capacity() <= 4 {
            small_checked += 1;
            let rep =
                exact_evaluate(&inst, &PolicyKind::ThresholdUnit, &ExactOptions::default())
                    .unwrap();
            for t in 1..=inst.horizon() {
                for (oracle, dp) in rep.budget_dist[(t - 1) as usize]
                    .iter()
                    .zip(table.budget_row(t))
                {
                    assert!(
                        (oracle - dp).abs() < 1e-12,
                        "seed {seed} t={t}: {oracle} vs {dp}"
                    );
                }
            }
        }
    }
    assert!(small_checked >= 100, "only {small_checked} small instances");
    println!("acceptance 04 calibration well-defined: PASS ({small_checked} oracle-checked)");
}

/// Criterion 5: All-or-nothing separation: the lottery tops out at exactly 1/T on
/// the one-group-per-slot family while partial allocation guarantees
/// 1/(1+R) = 3/11 > 1/4; on the stationary reference the all-or-nothing
/// optimum 1/2 sits below both the cyclic value 0.625 and the stationary
/// floor.
#[test]
fn acceptance_05_all_or_nothing_separation() {
    let hard = hardgen(&Family::AonGeneral {
        eps: 1.0 / 6.0,
        horizon: 4,
    })
    .unwrap();
    let lottery =
        exact_evaluate(&hard.instance, &PolicyKind::AonLottery, &ExactOptions::default())
            .unwrap();
    for row in &lottery.rows {
        assert!((row.fe_fr_beta.unwrap() - 0.25).abs() < 1e-12);
    }
    let greedy =
        exact_evaluate(&hard.instance, &PolicyKind::AonGreedy, &ExactOptions::default())
            .unwrap();
    assert!(greedy.min_fe_fr_beta.unwrap() <= 0.25 + 1e-12);
    let r = hard.instance.load_summary().r_unit;
    assert!((r - 8.0 / 3.0).abs() < 1e-12);
    assert!((general_bound(r) - 3.0 / 11.0).abs() < 1e-12);
    assert!(general_bound(r) > 0.25);

    let stationary = reference_stationary();
    let aon = exact_evaluate(&stationary, &PolicyKind::AonGreedy, &ExactOptions::default())
        .unwrap()
        .min_fe_fr_beta
        .unwrap();
    let rcb = exact_evaluate(&stationary, &PolicyKind::Rcb, &ExactOptions::default())
        .unwrap()
        .min_fe_fr_beta
        .unwrap();
    assert!((aon - 0.5).abs() < 1e-12);
    assert!(aon < rcb);
    assert!(aon < stationary_floor_bound(1.5));
    println!("acceptance 05 all-or-nothing separation: PASS");
}

/// Criterion 6: Ceiling audits over a 3x3 (rho, eps) grid of both tight families:
/// the optimal policies must never exceed the proven ceilings.
#[test]
fn acceptance_06_upper_bound_audits() {
    for rho in [0.5, 1.0, 1.5] {
        for eps in [0.05, 0.1, 0.2] {
            let hard = hardgen(&Family::GeneralTight {
                betas: vec![0.5, 1.0],
                rho,
                eps,
                horizon: 4,
                capacity: 3,
            })
            .unwrap();
            let rep = exact_evaluate(
                &hard.instance,
                &PolicyKind::ThresholdWeighted,
                &ExactOptions::default(),
            )
            .unwrap();
            let outcome =
                audit_ceiling(&hard, &PolicyKind::ThresholdWeighted, rep.min_fe_fr_beta.unwrap())
                    .unwrap_or_else(|e| panic!("rho={rho} eps={eps}: {e}"));
            assert!((outcome.ceiling - 1.0 / (1.0 + rho - eps)).abs() < 1e-12);
        }
    }
    for rho in [0.5, 1.0, 2.0] {
        for eps in [0.05, 0.1, 0.2] {
            let hard = hardgen(&Family::FullSupport {
                betas: vec![0.5, 1.0],
                rho,
                eps,
                horizon: 3,
                capacity: 3,
            })
            .unwrap();
            let rep = exact_evaluate(
                &hard.instance,
                &PolicyKind::RcbWeighted,
                &ExactOptions::default(),
            )
            .unwrap();
            audit_ceiling(&hard, &PolicyKind::RcbWeighted, rep.min_fe_fr_beta.unwrap())
                .unwrap_or_else(|e| panic!("rho={rho} eps={eps}: {e}"));
        }
    }
    println!("acceptance 06 upper-bound audits: PASS");
}

/// Criterion 7: Bound ordering over the load-horizon grid, with the stationary
/// level collapsing onto its floor as the horizon grows.
#[test]
fn acceptance_07_bound_ordering_and_limits() {
    for tenths in 1..=50 {
        let r = f64::from(tenths) / 10.0;
        let floor = stationary_floor_bound(r);
        assert!(floor - general_bound(r) > 1e-9, "r={r}");
        for t in [1u32, 2, 5, 10, 100] {
            let exact = stationary_exact_bound(r, t);
            assert!(exact >= floor - 1e-15, "r={r} t={t}");
            assert!(exact > 0.0 && exact <= 1.0);
        }
        assert!(
            (stationary_exact_bound(r, 1_000_000) - floor).abs() < 1e-6,
            "r={r} long-horizon limit"
        );
    }
    println!("acceptance 07 bound ordering and limits: PASS");
}

/// Criterion 8: The fill-rate pathology: a policy that never serves group 2 still
/// scores min E[F_i] = 0.75 on the diagnostic metric while the
/// expectation-ratio metric reads 0 for that group.
#[test]
fn acceptance_08_fill_rate_pathology() {
    let inst = fora::analysis::fill_rate_pathology(5);
    let rep = exact_evaluate(
        &inst,
        &PolicyKind::DenylistGreedy { denied: vec![2] },
        &ExactOptions {
            track_fill: true,
            ..ExactOptions::default()
        },
    )
    .unwrap();
    let fill = rep.fill_rate.as_ref().unwrap();
    let min_fill = fill.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(min_fill, 0.75);
    assert_eq!(fill[0], 1.0);
    assert_eq!(rep.rows[1].fe_fr_beta, Some(0.0));
    println!("acceptance 08 fill-rate pathology: PASS");
}

/// Criterion 9: Long-run convergence: over 1e5 days the cumulative ratio of every
/// group of the late-arrival instance ends within 0.02 of the guarantee
/// 0.5, for ten consecutive seeds.
#[test]
fn acceptance_09_long_run_convergence() {
    let hard = reference_general_tight();
    let policy = Policy::build(PolicyKind::ThresholdWeighted, &hard.instance).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let trace = run_long_run(&hard.instance, &policy, 100_000, seed).unwrap();
        for group in 1..=hard.instance.groups() {
            let last = trace.final_ratio(group).unwrap();
            worst = worst.max((last - 0.5).abs());
            assert!(
                (last - 0.5).abs() <= 0.02,
                "seed {seed} group {group}: {last}"
            );
        }
    }
    println!("acceptance 09 long-run convergence: PASS (worst gap {worst:.4})");
}

/// Criterion 10: Performance envelope: a million weighted-cyclic trials of a
/// T=50, K=100, N=5 instance inside a minute, and the calibration table
/// for T=100, K=200, N=10 inside ten seconds.
#[test]
fn acceptance_10_performance_envelope() {
    let cells: Vec<(u32, u32, f64)> = (1..=5u32).map(|i| (i, 10 * i, 0.04)).collect();
    let inst =
        Instance::time_invariant(100, 50, &[0.6, 0.7, 0.8, 0.9, 1.0], &cells).unwrap();
    let policy = Policy::build(PolicyKind::RcbWeighted, &inst).unwrap();
    let start = Instant::now();
    let rep = run_trials(
        &inst,
        &policy,
        &SimOptions {
            trials: 1_000_000,
            seed: 7,
            ..SimOptions::default()
        },
    );
    let sim_elapsed = start.elapsed();
    assert!(rep.min_fe_fr_beta.is_some());
    assert!(
        sim_elapsed.as_secs_f64() < 60.0,
        "simulation took {sim_elapsed:?}"
    );

    let cells: Vec<(u32, u32, f64)> = (1..=10u32).map(|i| (i, 19 * i, 0.05)).collect();
    let big = Instance::time_invariant(200, 100, &[1.0; 10], &cells).unwrap();
    let start = Instant::now();
    let table = compute_gamma(&big).unwrap();
    let dp_elapsed = start.elapsed();
    assert!(table.gamma(100, 200) > &0.0);
    assert!(dp_elapsed.as_secs_f64() < 10.0, "calibration took {dp_elapsed:?}");
    println!(
        "acceptance 10 performance envelope: PASS (sim {sim_elapsed:?}, calibration {dp_elapsed:?})"
    );
}

/// Rational-arithmetic spot check used by criterion 1's tolerances: the
/// calibration table and oracle agree exactly over the stored inputs.
#[test]
fn acceptance_rational_mode_is_exact() {
    let inst = Instance::time_invariant(2, 2, &[1.0], &[(1, 1, 0.5)]).unwrap();
    let table = compute_gamma_in::<BigRational>(&inst).unwrap();
    let rep = exact_evaluate(
        &inst,
        &PolicyKind::ThresholdUnit,
        &ExactOptions {
            arithmetic: Arithmetic::Rational,
            ..ExactOptions::default()
        },
    )
    .unwrap();
    for t in 1..=2u32 {
        for (oracle, dp) in rep.budget_dist[(t - 1) as usize].iter().zip(table.budget_row(t)) {
            assert_eq!(*oracle, dp.to_f64());
        }
    }
    println!("acceptance rational-mode exactness: PASS");
}
