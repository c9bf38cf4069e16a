//! Invariants checked on random instances, grouped by module. Each entry
//! runs its own proptest strategy with a deterministic runner.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use rand::Rng;

use tworegime::cli::{parse_config, Command, RunConfig};
use tworegime::estimator::{bcd, estimate_exact, estimate_miqp, BcdConfig, MiqpForm};
use tworegime::inference::{
    bootstrap_cv, bootstrap_lr, bootstrap_outcome, bootstrap_p_value, k_step_chain, BootstrapConfig, FactorSource, GaussianPerturber, HypothesisSpec,
    PcaResampler,
};
use tworegime::model::{build_design, index_values, regime_indicator, ssr, with_constant, Dataset, ParamVector, SearchSpace};
use tworegime::optim::{branch_and_bound, enumerate_cells, solve_relaxation, SolverConfig};
use tworegime::pca::{estimate_factors, rotation_matrix};
use tworegime::selection::{select_factors, SelectionConfig, SelectionMethod};
use tworegime::simulate::{drift_function, generate_dgp, DgpConfig, DriftConfig, McReport, RepRecord};

use super::{brute_force_miqp, instance, normal, random_miqp, rank_k_panel, rng};

pub struct Invariant {
    pub module: &'static str,
    pub name: &'static str,
    pub check: fn(u32) -> Result<(), String>,
}

pub fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, max_shrink_iters: 64, ..Config::default() };
    let algo = cfg.rng_algorithm;
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(algo))
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, TestCaseError> {
    r.map_err(|e| fail(e.to_string()))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn random_gamma(df: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    std::iter::once(1.0).chain((1..df).map(|_| r.random::<f64>() * 2.0 - 1.0)).collect()
}

pub const ALL: &[Invariant] = &[
    Invariant { module: "model", name: "rescaling gamma keeps regimes and ssr", check: model_scale_invariance },
    Invariant { module: "model", name: "design matches a row loop", check: model_design_oracle },
    Invariant { module: "model", name: "ssr equals the design residual norm", check: model_ssr_identity },
    Invariant { module: "model", name: "zero index goes to regime 0", check: model_ties },
    Invariant { module: "model", name: "dataset layout is enforced", check: model_dataset_layout },
    Invariant { module: "pca", name: "factors orthonormal, eigenvalues ordered", check: pca_orthonormal },
    Invariant { module: "pca", name: "eigen identity", check: pca_eigen_identity },
    Invariant { module: "pca", name: "sign convention", check: pca_sign },
    Invariant { module: "pca", name: "rotation links indices on noiseless panels", check: pca_rotation },
    Invariant { module: "optim", name: "branch and bound matches brute force", check: optim_bnb_brute },
    Invariant { module: "optim", name: "relaxation satisfies constraints", check: optim_relaxation_feasible },
    Invariant { module: "optim", name: "warm start never worsens", check: optim_warm_start },
    Invariant { module: "optim", name: "gap and integrality", check: optim_gap_integral },
    Invariant { module: "optim", name: "cells cover a fine grid", check: optim_cells_cover_grid },
    Invariant { module: "optim", name: "problem validation", check: optim_validation },
    Invariant { module: "estimator", name: "MIQP equals exact sweep", check: est_miqp_exact },
    Invariant { module: "estimator", name: "basic and alternative forms agree", check: est_forms_agree },
    Invariant { module: "estimator", name: "returned solution is feasible", check: est_feasible },
    Invariant { module: "estimator", name: "BCD descent", check: est_bcd_descent },
    Invariant { module: "estimator", name: "classification scale invariance", check: est_scale_classification },
    Invariant { module: "selection", name: "penalised objective monotone in lambda", check: sel_monotone },
    Invariant { module: "selection", name: "switched-off factors get zero weight", check: sel_zero_weight },
    Invariant { module: "selection", name: "candidate order does not matter", check: sel_permutation },
    Invariant { module: "inference", name: "unit weights reproduce y", check: inf_unit_weights },
    Invariant { module: "inference", name: "bootstrap LR draws non-negative", check: inf_lr_nonnegative },
    Invariant { module: "inference", name: "k-step chains descend", check: inf_k_step_monotone },
    Invariant { module: "inference", name: "deterministic replay", check: inf_replay },
    Invariant { module: "inference", name: "zero residual covariance keeps factors", check: inf_zero_noise },
    Invariant { module: "inference", name: "p-value and critical value conventions", check: inf_conventions },
    Invariant { module: "simulate", name: "drift function non-negative", check: sim_drift_nonnegative },
    Invariant { module: "simulate", name: "drift function continuous in omega", check: sim_drift_continuous },
    Invariant { module: "simulate", name: "DGP noise variance", check: sim_dgp_moments },
    Invariant { module: "simulate", name: "report statistics are coherent", check: sim_report },
    Invariant { module: "cli", name: "config round trip", check: cli_config_roundtrip },
    Invariant { module: "cli", name: "result round trip", check: cli_result_roundtrip },
];

// ---- model

pub fn model_scale_invariance(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 0.01f64..100.0, 2usize..5), |(seed, c, df)| {
        let (ds, f, _) = instance(25, 2, df, seed);
        let g = random_gamma(df, seed ^ 1);
        let d = ok(regime_indicator(&f, &g))?;
        let scaled: Vec<f64> = g.iter().map(|v| v * c).collect();
        let d_c: Vec<u8> = index_values(&f, &scaled).iter().map(|&v| u8::from(v > 0.0)).collect();
        prop_assert_eq!(&d, &d_c);
        let p = ok(ParamVector::new(vec![0.5, -1.0], vec![2.0, 0.3], g))?;
        let z = ok(build_design(&ds.x, &d_c))?;
        let direct = (&ds.y - z * p.alpha()).norm_squared() / 25.0;
        prop_assert!(close(ok(ssr(&ds, &p, &f))?, direct, 1e-12));
        Ok(())
    })
}

pub fn model_design_oracle(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 1usize..40, 1usize..4), |(seed, t, dx)| {
        let mut r = rng(seed);
        let x = DMatrix::from_fn(t, dx, |_, _| normal(&mut r));
        let d: Vec<u8> = (0..t).map(|_| r.random::<bool>() as u8).collect();
        let z = ok(build_design(&x, &d))?;
        prop_assert_eq!(z.shape(), (t, 2 * dx));
        for i in 0..t {
            for j in 0..dx {
                prop_assert_eq!(z[(i, j)], x[(i, j)]);
                prop_assert_eq!(z[(i, dx + j)], if d[i] == 1 { x[(i, j)] } else { 0.0 });
            }
        }
        Ok(())
    })
}

pub fn model_ssr_identity(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 5usize..40, 1usize..4, 2usize..5), |(seed, t, dx, df)| {
        let (ds, f, _) = instance(t, dx, df, seed);
        let mut r = rng(seed ^ 7);
        let g = random_gamma(df, seed ^ 3);
        let p = ok(ParamVector::new((0..dx).map(|_| normal(&mut r)).collect(), (0..dx).map(|_| normal(&mut r)).collect(), g.clone()))?;
        let z = ok(build_design(&ds.x, &ok(regime_indicator(&f, &g))?))?;
        let direct = (&ds.y - z * p.alpha()).norm_squared() / t as f64;
        let s = ok(ssr(&ds, &p, &f))?;
        prop_assert!((s - direct).abs() <= 1e-12 * direct.max(1.0), "{} vs {}", s, direct);
        Ok(())
    })
}

pub fn model_ties(cases: u32) -> Result<(), String> {
    run(cases, (-5.0f64..5.0, -5.0f64..5.0), |(a, b)| {
        // Row (a, −1) with γ = (1, a) has index exactly zero; row (b, −1) is generic.
        let f = DMatrix::from_row_slice(2, 2, &[a, -1.0, b, -1.0]);
        let d = ok(regime_indicator(&f, &[1.0, a]))?;
        prop_assert_eq!(d[0], 0);
        prop_assert_eq!(d[1], u8::from(b > a));
        Ok(())
    })
}

pub fn model_dataset_layout(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 2usize..20, 0usize..3), |(seed, t, which)| {
        let (ds, f, _) = instance(t, 2, 2, seed);
        prop_assert!(Dataset::new(ds.y.clone(), ds.x.clone(), Some(f.clone()), None).is_ok());
        let (mut x, mut f2) = (ds.x.clone(), f.clone());
        match which {
            0 => x[(t - 1, 0)] = 0.5,
            1 => f2[(0, 1)] = 1.0,
            _ => {
                prop_assert!(Dataset::new(ds.y.clone(), x, None, None).is_err());
                return Ok(());
            }
        }
        prop_assert!(Dataset::new(ds.y.clone(), x, Some(f2), None).is_err());
        Ok(())
    })
}

// ---- pca

fn noisy_panel(seed: u64, t: usize, n: usize, k: usize) -> DMatrix<f64> {
    let (y, _, _) = rank_k_panel(t, n, k, seed);
    let mut r = rng(seed ^ 11);
    y + DMatrix::from_fn(t, n, |_, _| 0.3 * normal(&mut r))
}

pub fn pca_orthonormal(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 8usize..40, 5usize..30, 1usize..4), |(seed, t, n, k)| {
        let fe = ok(estimate_factors(&noisy_panel(seed, t, n, k), k))?;
        let g = fe.f1.tr_mul(&fe.f1) / t as f64;
        prop_assert!((g - DMatrix::identity(k, k)).amax() <= 1e-8);
        prop_assert!(fe.v.iter().all(|&v| v > 0.0));
        prop_assert!(fe.v.as_slice().windows(2).all(|w| w[0] >= w[1]));
        Ok(())
    })
}

pub fn pca_eigen_identity(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 8usize..40, 5usize..30, 1usize..4), |(seed, t, n, k)| {
        let y = noisy_panel(seed, t, n, k);
        let fe = ok(estimate_factors(&y, k))?;
        let lhs = (&y * y.transpose()) * &fe.f1 / (n * t) as f64;
        let rhs = &fe.f1 * DMatrix::from_diagonal(&fe.v);
        prop_assert!((&lhs - &rhs).amax() <= 1e-6 * rhs.amax().max(1e-300));
        Ok(())
    })
}

pub fn pca_sign(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 8usize..40, 5usize..30, 1usize..4), |(seed, t, n, k)| {
        let y = noisy_panel(seed, t, n, k);
        let a = ok(estimate_factors(&y, k))?;
        for c in 0..k {
            let col = a.f1.column(c);
            let tol = 1e-10 * col.amax();
            let first = col.iter().find(|v| v.abs() > tol).copied().unwrap_or(0.0);
            prop_assert!(first > 0.0);
        }
        // Flipping the panel sign leaves the estimate unchanged.
        let b = ok(estimate_factors(&(-&y), k))?;
        prop_assert!((&a.f1 - &b.f1).amax() <= 1e-8 * a.f1.amax());
        Ok(())
    })
}

pub fn pca_rotation(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 15usize..40, 10usize..30, 1usize..4), |(seed, t, n, k)| {
        let (y, g, lam) = rank_k_panel(t, n, k, seed);
        let fe = ok(estimate_factors(&y, k))?;
        let rot = ok(rotation_matrix(&fe, &g, &lam))?;
        let h = &rot.h;
        prop_assert_eq!(h[(k, k)], 1.0);
        for j in 0..k {
            prop_assert_eq!(h[(k, j)], 0.0);
            prop_assert_eq!(h[(j, k)], 0.0);
        }
        let sv = h.clone().singular_values();
        prop_assert!(sv.min() > 1e-10 * sv.max());
        let gamma = DVector::from_vec(random_gamma(k + 1, seed ^ 5));
        let phi = h * &gamma;
        let lhs = &fe.f_full * &gamma;
        let rhs = with_constant(&g) * phi;
        prop_assert!((&lhs - &rhs).amax() <= 1e-6 * lhs.amax().max(1.0));
        Ok(())
    })
}

// ---- optim

pub fn optim_bnb_brute(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 1usize..7, 1usize..4), |(seed, nb, nc)| {
        let (p, _) = random_miqp(nb, nc, seed);
        let oracle = brute_force_miqp(&p).ok_or_else(|| fail("oracle found no feasible point"))?;
        let s = ok(branch_and_bound(&p, &SolverConfig::default(), None))?;
        prop_assert!((s.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "bnb {} oracle {}", s.objective, oracle);
        Ok(())
    })
}

pub fn optim_relaxation_feasible(cases: u32) -> Result<(), String> {
    let tol = SolverConfig::default().relaxation_tol;
    run(cases, (any::<u64>(), 1usize..7, 1usize..4), move |(seed, nb, nc)| {
        let (p, _) = random_miqp(nb, nc, seed);
        let r = ok(solve_relaxation(&p, tol, 20_000))?;
        let scale = 1.0 + p.b_hi.iter().chain(&p.x_hi).filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(p.max_violation(&r.x) <= tol * scale, "violation {:.3e}", p.max_violation(&r.x));
        Ok(())
    })
}

pub fn optim_warm_start(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 1usize..7, 1usize..4, 1usize..6), |(seed, nb, nc, nodes)| {
        let (p, x0) = random_miqp(nb, nc, seed);
        let cfg = SolverConfig { node_limit: nodes, ..SolverConfig::default() };
        let s = ok(branch_and_bound(&p, &cfg, Some(&x0)))?;
        prop_assert!(!s.x.is_empty());
        prop_assert!(s.objective <= p.objective(&x0) + 1e-9 * p.objective(&x0).abs().max(1.0));
        Ok(())
    })
}

pub fn optim_gap_integral(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 1usize..7, 1usize..4), |(seed, nb, nc)| {
        let (p, _) = random_miqp(nb, nc, seed);
        let s = ok(branch_and_bound(&p, &SolverConfig::default(), None))?;
        prop_assert!(s.gap >= -1e-9);
        if s.status == tworegime::model::Status::Optimal {
            prop_assert!(p.integral(&s.x, 1e-6));
            prop_assert!(p.max_violation(&s.x) <= 1e-6);
        }
        Ok(())
    })
}

pub fn optim_cells_cover_grid(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 3usize..25), |(seed, t)| {
        let (ds, f, _) = instance(t, 1, 2, seed);
        let space = ok(SearchSpace::new(vec![-1.0; 2], vec![1.0; 2], vec![-1.5], vec![1.5], 0.01, 0.99, 1e-9))?;
        let _ = ds;
        let cells: HashSet<Vec<u8>> = ok(enumerate_cells(&f, &space))?.into_iter().map(|(_, d)| d).collect();
        let steps = 100_000;
        let mut seen = HashSet::new();
        for i in 0..=steps {
            let g2 = -1.5 + 3.0 * i as f64 / steps as f64;
            let d = ok(regime_indicator(&f, &[1.0, g2]))?;
            if seen.insert(d.clone()) {
                prop_assert!(cells.contains(&d), "grid pattern at {} missing", g2);
            }
        }
        Ok(())
    })
}

pub fn optim_validation(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 1usize..7, 1usize..4, 0usize..3), |(seed, nb, nc, which)| {
        let (mut p, _) = random_miqp(nb, nc, seed);
        prop_assert!(p.validate().is_ok());
        match which {
            0 => p.x_hi[0] = 1.5,
            1 => {
                p.x_lo[nb] = 3.0;
            }
            _ => {
                // Negate the quadratic to break semi-definiteness.
                for v in p.q.nzval.iter_mut() {
                    *v = -*v;
                }
            }
        }
        prop_assert!(p.validate().is_err());
        Ok(())
    })
}

// ---- estimator

fn quick_solver() -> SolverConfig {
    SolverConfig { time_limit: 30.0, ..SolverConfig::default() }
}

pub fn est_miqp_exact(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 10usize..21, 1usize..3), |(seed, t, dx)| {
        let (ds, f, space) = instance(t, dx, 2, seed);
        let ex = ok(estimate_exact(&ds, &f, &space))?;
        let mq = ok(estimate_miqp(&ds, &f, &space, MiqpForm::Alternative, &quick_solver()))?;
        prop_assert!((ex.objective - mq.objective).abs() <= 1e-8, "exact {} miqp {}", ex.objective, mq.objective);
        prop_assert_eq!(&ex.d, &mq.d);
        Ok(())
    })
}

pub fn est_forms_agree(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 8usize..15, 1usize..3), |(seed, t, dx)| {
        let (ds, f, space) = instance(t, dx, 2, seed);
        let a = ok(estimate_miqp(&ds, &f, &space, MiqpForm::Basic, &quick_solver()))?;
        let b = ok(estimate_miqp(&ds, &f, &space, MiqpForm::Alternative, &quick_solver()))?;
        prop_assert!((a.objective - b.objective).abs() <= 1e-8, "basic {} alternative {}", a.objective, b.objective);
        Ok(())
    })
}

pub fn est_feasible(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 10usize..21, 1usize..3, 2usize..4, any::<bool>()), |(seed, t, dx, df, use_miqp)| {
        let (ds, f, space) = instance(t, dx, df, seed);
        let r = if use_miqp { ok(estimate_miqp(&ds, &f, &space, MiqpForm::Alternative, &quick_solver()))? } else { ok(estimate_exact(&ds, &f, &space))? };
        let g = &r.params.gamma;
        prop_assert_eq!(g[0], 1.0);
        let idx = index_values(&f, g);
        for (i, &v) in idx.iter().enumerate() {
            if r.d[i] == 1 {
                prop_assert!(v >= space.eps_strict - 1e-6, "row {} index {}", i, v);
            } else {
                prop_assert!(v <= 1e-6, "row {} index {}", i, v);
            }
        }
        prop_assert_eq!(&ok(regime_indicator(&f, g))?, &r.d);
        prop_assert!(space.share_ok(r.d.iter().map(|&v| v as usize).sum(), t));
        for (k, &v) in g[1..].iter().enumerate() {
            prop_assert!(v >= space.gamma2_lo[k] - 1e-6 && v <= space.gamma2_hi[k] + 1e-6);
        }
        let a = r.params.alpha();
        prop_assert!(a.iter().enumerate().all(|(j, &v)| v >= space.alpha_lo[j] - 1e-6 && v <= space.alpha_hi[j] + 1e-6));
        Ok(())
    })
}

pub fn est_bcd_descent(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 20usize..36, 1usize..3, 2usize..5), |(seed, t, dx, df)| {
        let (ds, f, space) = instance(t, dx, df, seed);
        // A node-starved first step leaves room for the MILP iterations.
        let solver = SolverConfig { node_limit: 25, ..SolverConfig::default() };
        let cfg = BcdConfig { max_outer_iter: 10, ..BcdConfig::default() };
        let r = ok(bcd(&ds, &f, &space, &cfg, &solver))?;
        prop_assert!(!r.trace.is_empty());
        for w in r.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "trace rose {} -> {}", w[0], w[1]);
        }
        Ok(())
    })
}

pub fn est_scale_classification(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 12usize..40, 2usize..5, 0.001f64..1000.0), |(seed, t, df, c)| {
        let (ds, f, space) = instance(t, 1, df, seed);
        let r = ok(estimate_exact(&ds, &f, &space))?;
        let scaled: Vec<f64> = r.params.gamma.iter().map(|v| v * c).collect();
        let d: Vec<u8> = index_values(&f, &scaled).iter().map(|&v| u8::from(v > 0.0)).collect();
        prop_assert_eq!(d, r.d);
        Ok(())
    })
}

// ---- selection

/// Four factor columns: one true, two candidates (one relevant), the constant.
fn selection_instance(t: usize, seed: u64) -> (Dataset, DMatrix<f64>, SearchSpace) {
    let (mut ds, f, space) = instance(t, 1, 4, seed);
    let mut r = rng(seed ^ 9);
    let d = ok(regime_indicator(&f, &[1.0, 0.5, 0.0, 0.1])).unwrap();
    ds.y = DVector::from_fn(t, |i, _| 1.0 + 2.0 * d[i] as f64 + 0.5 * normal(&mut r));
    (ds, f, space)
}

fn enumerate(lambda: f64) -> SelectionConfig {
    SelectionConfig { lambda: Some(lambda), method: SelectionMethod::Enumerate, ..SelectionConfig::default() }
}

pub fn sel_monotone(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 30usize..60), |(seed, t)| {
        let (ds, f, space) = selection_instance(t, seed);
        let mut prev = f64::INFINITY;
        // λ decreasing along the grid.
        for lambda in [1.0, 0.3, 0.1, 0.03, 0.01, 0.0] {
            let out = ok(select_factors(&ds, &f, &space, &enumerate(lambda), &quick_solver()))?;
            prop_assert!(out.penalized_objective <= prev + 1e-12, "lambda {}: {} after {}", lambda, out.penalized_objective, prev);
            prev = out.penalized_objective;
        }
        Ok(())
    })
}

pub fn sel_zero_weight(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 9usize..13, 0.0f64..0.2), |(seed, t, lambda)| {
        let (ds, f, space) = selection_instance(t, seed);
        let cfg = SelectionConfig { lambda: Some(lambda), method: SelectionMethod::Miqp, ..SelectionConfig::default() };
        let out = ok(select_factors(&ds, &f, &space, &cfg, &quick_solver()))?;
        for c in 1..3 {
            if !out.active.contains(&c) {
                prop_assert_eq!(out.selection.params.gamma[c], 0.0);
                prop_assert_eq!(out.gamma_full[c], 0.0);
            }
        }
        Ok(())
    })
}

pub fn sel_permutation(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 30usize..60, 0.0f64..0.2), |(seed, t, lambda)| {
        let (ds, f, space) = selection_instance(t, seed);
        let a = ok(select_factors(&ds, &f, &space, &enumerate(lambda), &quick_solver()))?;
        let fs = f.select_columns(&[0, 2, 1, 3]);
        let ds2 = ok(Dataset::new(ds.y.clone(), ds.x.clone(), Some(fs.clone()), None))?;
        let b = ok(select_factors(&ds2, &fs, &space, &enumerate(lambda), &quick_solver()))?;
        let swap = |c: &usize| match *c {
            1 => 2,
            2 => 1,
            other => other,
        };
        let mut mapped: Vec<usize> = b.active.iter().map(swap).collect();
        mapped.sort_unstable();
        // Different subsets are allowed only when they tie exactly.
        prop_assert!(close(a.penalized_objective, b.penalized_objective, 1e-10), "{:?} {} vs {:?} {}", a.active, a.penalized_objective, mapped, b.penalized_objective);
        Ok(())
    })
}

// ---- inference

pub fn inf_unit_weights(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 1usize..60), |(seed, t)| {
        let mut r = rng(seed);
        let y = DVector::from_fn(t, |_, _| 10.0 * normal(&mut r));
        let fitted = DVector::from_fn(t, |_, _| 10.0 * normal(&mut r));
        let resid = &y - &fitted;
        let ys = bootstrap_outcome(&fitted, &resid, &DVector::from_element(t, 1.0));
        for i in 0..t {
            prop_assert!((ys[i] - y[i]).abs() <= 4.0 * f64::EPSILON * y[i].abs().max(fitted[i].abs()));
        }
        Ok(())
    })
}

fn small_boot(seed: u64, b: usize) -> BootstrapConfig {
    BootstrapConfig { b, seed, ..BootstrapConfig::default() }
}

pub fn inf_lr_nonnegative(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 30usize..60, 2usize..4), |(seed, t, df)| {
        let (ds, f, space) = instance(t, 1, df, seed);
        let h = HypothesisSpec::zero(df, 0);
        let out = ok(bootstrap_lr(&ds, FactorSource::Observed(&f), &space, &h, &small_boot(seed, 9), &quick_solver()))?;
        prop_assert!(out.lr >= 0.0);
        prop_assert!(out.draws.iter().all(|&v| v >= -1e-9));
        prop_assert!(out.p_value > 0.0 && out.p_value <= 1.0);
        Ok(())
    })
}

pub fn inf_k_step_monotone(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 20usize..60, 2usize..4, 1usize..6), |(seed, t, df, k)| {
        let (ds, f, space) = instance(t, 1, df, seed);
        let g0 = random_gamma(df, seed ^ 2).iter().map(|v| v.clamp(-1.9, 1.9)).collect::<Vec<_>>();
        let mut g0p = g0.clone();
        g0p[0] = 1.0;
        let chains = [None, Some(ok(HypothesisSpec::zero(df, 0).restriction(df))?)];
        for restr in &chains {
            let mut start = g0p.clone();
            if restr.is_some() {
                start[1] = 0.0;
            }
            let (trace, _) = ok(k_step_chain(&ds.x, &ds.y, &f, &space, &start, k, restr.as_ref(), &quick_solver()))?;
            prop_assert_eq!(trace.len(), k);
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
            }
        }
        Ok(())
    })
}

pub fn inf_replay(cases: u32) -> Result<(), String> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let two = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    run(cases, (any::<u64>(), 25usize..45), move |(seed, t)| {
        let (ds, f, space) = instance(t, 1, 2, seed);
        let h = HypothesisSpec::zero(2, 0);
        let go = || bootstrap_lr(&ds, FactorSource::Observed(&f), &space, &h, &small_boot(seed, 7), &quick_solver()).map(|o| o.draws);
        let a = ok(one.install(go))?;
        let b = ok(one.install(go))?;
        let c = ok(two.install(go))?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
        prop_assert_eq!(bits(&a), bits(&c));
        Ok(())
    })
}

pub fn inf_zero_noise(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 10usize..30, 8usize..20, 1usize..3), |(seed, t, n, k)| {
        let fe = ok(estimate_factors(&noisy_panel(seed, t, n, k), k))?;
        let zero = DMatrix::zeros(n, n);
        let mut r = rng(seed ^ 4);
        let pca = ok(PcaResampler::new(&fe, &zero))?;
        let f_star = pca.draw(&mut r).ok_or_else(|| fail("PCA draw failed"))?;
        prop_assert!((&f_star - &fe.f_full).amax() <= 1e-6, "pca {:.3e}", (&f_star - &fe.f_full).amax());
        let gauss = ok(GaussianPerturber::from_estimate(&fe, &zero))?;
        let f_g = gauss.draw(&mut r);
        prop_assert!((&f_g - &fe.f_full).amax() <= 1e-12);
        prop_assert!(f_g.column(k).iter().all(|&v| v == -1.0));
        Ok(())
    })
}

pub fn inf_conventions(cases: u32) -> Result<(), String> {
    run(cases, (prop::collection::vec(0.0f64..10.0, 1..300), 0.0f64..10.0, 0.001f64..0.5), |(draws, stat, level)| {
        let b = draws.len();
        let p = bootstrap_p_value(stat, &draws);
        let hits = draws.iter().filter(|&&v| v >= stat).count();
        prop_assert_eq!(p, (1 + hits) as f64 / (b + 1) as f64);
        prop_assert!(p > 0.0 && p <= 1.0);
        let cv = bootstrap_cv(&draws, level);
        prop_assert!(draws.contains(&cv));
        let mut s = draws.clone();
        s.sort_by(f64::total_cmp);
        let idx = (((1.0 - level) * (b + 1) as f64) - 1e-9).ceil() as usize;
        prop_assert_eq!(cv, s[idx.clamp(1, b) - 1]);
        Ok(())
    })
}

// ---- simulate

fn drift(omega: f64, draws: usize, seed: u64, grid: Vec<f64>) -> DriftConfig {
    DriftConfig { omega, g_grid: grid, mc_draws: draws, seed, ..DriftConfig::default() }
}

pub fn sim_drift_nonnegative(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), -3.0f64..3.0, prop::collection::vec(-3.0f64..3.0, 1..6)), |(seed, log_omega, grid)| {
        let c = ok(drift_function(&drift(10f64.powf(log_omega), 2000, seed, grid)))?;
        for (a, se) in c.a.iter().zip(&c.se) {
            prop_assert!(*a >= -3.0 * se - 1e-12, "A = {} (se {})", a, se);
        }
        Ok(())
    })
}

pub fn sim_drift_continuous(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), -3.0f64..3.0, prop::collection::vec(-2.0f64..2.0, 1..6)), |(seed, log_omega, grid)| {
        let w = 10f64.powf(log_omega);
        let a = ok(drift_function(&drift(w, 2000, seed, grid.clone())))?;
        let b = ok(drift_function(&drift(w * (1.0 + 1e-4), 2000, seed, grid)))?;
        for i in 0..a.a.len() {
            let slack = 3.0 * (a.se[i] + b.se[i]) + 1e-3 * a.a[i].abs().max(1e-9);
            prop_assert!((a.a[i] - b.a[i]).abs() <= slack, "{} vs {}", a.a[i], b.a[i]);
        }
        Ok(())
    })
}

pub fn sim_dgp_moments(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 0.1f64..2.0), |(seed, sigma)| {
        let cfg = DgpConfig { t: 5000, n: 0, sigma_eps: sigma, seed, ..DgpConfig::baseline() };
        let sim = ok(generate_dgp(&ok(cfg.resolve())?, &mut rng(seed)))?;
        let p = &sim.params_true;
        let z = ok(build_design(&sim.data.x, &sim.d_true))?;
        let e = &sim.data.y - z * p.alpha();
        let mean = e.mean();
        let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        prop_assert!((var / (sigma * sigma) - 1.0).abs() <= 0.1, "variance ratio {}", var / (sigma * sigma));
        Ok(())
    })
}

pub fn sim_report(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 1usize..50), |(seed, reps)| {
        let mut r = rng(seed);
        let records: Vec<RepRecord> = (0..reps)
            .map(|_| RepRecord {
                names: vec!["beta1".into(), "gamma2".into()],
                errors: vec![normal(&mut r) + 0.3, normal(&mut r)],
                covered: vec![Some(r.random::<bool>()), None],
                accuracy: Some(r.random::<f64>()),
                ..RepRecord::default()
            })
            .collect();
        let rep = McReport::from_records("prop", records, 0, 0.0);
        for p in &rep.params {
            prop_assert!(p.rmse + 1e-12 >= p.bias.abs());
            if let Some(c) = p.coverage {
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
        prop_assert!(rep.param("gamma2").unwrap().coverage.is_none());
        Ok(())
    })
}

// ---- cli

pub fn cli_config_roundtrip(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 10usize..500, 0usize..300, 1usize..4, 0.01f64..3.0, -2.0f64..2.0), |(seed, t, n, k, sigma, omega_log)| {
        let dgp = DgpConfig {
            t,
            n,
            k,
            phi0: std::iter::once(1.0).chain((0..k).map(|i| 0.1 * i as f64)).collect(),
            sigma_eps: sigma,
            seed,
            ..DgpConfig::baseline()
        };
        let sim = format!(r#"{{"dgp": {}, "rep": {}}}"#, serde_json::to_string(&dgp).unwrap(), seed % 100);
        let RunConfig::Simulate(c) = ok(parse_config(Command::Simulate, Some(&sim)))? else { return Err(fail("wrong variant")) };
        prop_assert_eq!(&c.dgp, &dgp);
        let omega = if seed % 5 == 0 { f64::INFINITY } else { 10f64.powf(omega_log) };
        let d = drift(omega, 1 + (seed % 1000) as usize, seed, vec![omega_log, 0.0]);
        let text = format!(r#"{{"drift": {}}}"#, serde_json::to_string(&d).unwrap());
        let RunConfig::Drift(c) = ok(parse_config(Command::Drift, Some(&text)))? else { return Err(fail("wrong variant")) };
        prop_assert_eq!(c.drift, d);
        Ok(())
    })
}

pub fn cli_result_roundtrip(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 12usize..50), |(seed, t)| {
        let dir = tempfile::tempdir().map_err(|e| fail(e.to_string()))?;
        let (ds, f, _) = instance(t, 2, 2, seed);
        let p = dir.path();
        let write = |name: &str, m: &DMatrix<f64>| tworegime::io::write_matrix(&p.join(name), m, None);
        ok(write("y.csv", &DMatrix::from_column_slice(t, 1, ds.y.as_slice())))?;
        ok(write("x.csv", &ds.x.columns(1, 1).into_owned()))?;
        ok(write("f.csv", &f.columns(0, 1).into_owned()))?;
        let cfg = format!(
            r#"{{"data": {{"y": {:?}, "x": {:?}, "factors": {:?}}}, "space": {{"tau1": 0.1, "tau2": 0.9}}}}"#,
            p.join("y.csv"),
            p.join("x.csv"),
            p.join("f.csv")
        );
        ok(std::fs::write(p.join("cfg.json"), cfg))?;
        let out = p.join("out.json");
        let (cfg_path, seed_s) = (p.join("cfg.json"), seed.to_string());
        let args = ["tworegime", "estimate", "--config", cfg_path.to_str().unwrap(), "--seed", &seed_s, "--threads", "1", "--out", out.to_str().unwrap()];
        prop_assert_eq!(tworegime::cli::main_from_args(args), 0);
        let doc: serde_json::Value = ok(serde_json::from_str(&ok(std::fs::read_to_string(&out))?))?;
        prop_assert_eq!(doc["seed"].as_u64(), Some(seed));
        prop_assert_eq!(doc["config"]["space"]["tau1"].as_f64(), Some(0.1));
        let d = tworegime::cli::regimes_from_result(&doc).ok_or_else(|| fail("no regimes"))?;
        prop_assert_eq!(d.len(), t);
        let again = ok(serde_json::to_string(&doc))?;
        let back: serde_json::Value = ok(serde_json::from_str(&again))?;
        prop_assert_eq!(back, doc);
        Ok(())
    })
}
