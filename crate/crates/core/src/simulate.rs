//! Simulation designs, the Monte Carlo harness and the drift function.
//!
//! Replication `r` of a study draws from stream `r` of the study seed;
//! stream `u64::MAX` holds the once-per-study AR coefficients.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{alpha_covariance, estimate, ols_given_d, Backend, BcdConfig, MiqpForm};
use crate::inference::{bootstrap_lr, linearity_test, replication_rng, BootstrapConfig, FactorMode, FactorSource, HypothesisSpec, LinearityConfig};
use crate::model::{regime_indicator, with_constant, Dataset, EstimationResult, ParamVector, SearchSpace};
use crate::optim::SolverConfig;
use crate::pca::{estimate_factors, rotation_matrix, threshold_covariance, FactorEstimate};
use crate::selection::{select_factors, SelectionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpConfig {
    pub t: usize,
    /// Panel width; 0 skips the panel.
    pub n: usize,
    pub k: usize,
    pub dx: usize,
    pub beta0: Vec<f64>,
    pub delta0: Vec<f64>,
    /// Threshold coefficients on `(g_1, …, g_K, −1)`, first entry 1.
    pub phi0: Vec<f64>,
    /// Common AR coefficient of the non-constant regressors.
    pub rho_x: f64,
    /// Range for the factor AR coefficients, drawn once per study.
    pub rho_g: (f64, f64),
    /// Range for the idiosyncratic AR coefficients, drawn once per study.
    pub rho_e: (f64, f64),
    pub sigma_eps: f64,
    /// Variance of each loading entry; `None` uses `K`.
    pub loading_var: Option<f64>,
    /// Scale on the idiosyncratic panel term; `None` uses `√K`.
    pub panel_scale: Option<f64>,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self::baseline()
    }
}

impl DgpConfig {
    /// `T = N = 200`, two regressors, three factors with the third irrelevant.
    pub fn baseline() -> Self {
        Self {
            t: 200,
            n: 200,
            k: 3,
            dx: 2,
            beta0: vec![1.0, 1.0],
            delta0: vec![1.0, 1.0],
            phi0: vec![1.0, 2.0 / 3.0, 0.0, 2.0 / 3.0],
            rho_x: 0.5,
            rho_g: (0.2, 0.8),
            rho_e: (0.3, 0.5),
            sigma_eps: 0.5,
            loading_var: None,
            panel_scale: None,
            burn_in: 100,
            seed: 0,
        }
    }

    /// Baseline with a single factor, `φ₀ = (1, 2/3)`.
    pub fn single_factor(n: usize) -> Self {
        Self { n, k: 1, phi0: vec![1.0, 2.0 / 3.0], ..Self::baseline() }
    }

    /// Size design for the bootstrap: one factor, `φ₀ = (1, 0)`, no serial correlation.
    pub fn bootstrap_design() -> Self {
        Self {
            t: 200,
            n: 400,
            k: 1,
            delta0: vec![0.5, 0.5],
            phi0: vec![1.0, 0.0],
            rho_x: 0.0,
            rho_g: (0.0, 0.0),
            rho_e: (0.0, 0.0),
            sigma_eps: 1.0,
            ..Self::baseline()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(invalid(m));
        if self.t < 10 || self.k == 0 || self.dx == 0 {
            return bad(format!("need T >= 10, K >= 1 and d_x >= 1 (got {}, {}, {})", self.t, self.k, self.dx));
        }
        if self.beta0.len() != self.dx || self.delta0.len() != self.dx {
            return bad(format!("beta0 and delta0 need {} entries", self.dx));
        }
        if self.phi0.len() != self.k + 1 || self.phi0[0] != 1.0 {
            return bad(format!("phi0 needs {} entries with the first equal to 1", self.k + 1));
        }
        for (name, (lo, hi)) in [("rho_g", self.rho_g), ("rho_e", self.rho_e), ("rho_x", (self.rho_x, self.rho_x))] {
            if !(lo <= hi && lo.abs() < 1.0 && hi.abs() < 1.0) {
                return bad(format!("{name} must be an ordered range inside (-1, 1)"));
            }
        }
        if !(self.sigma_eps > 0.0) {
            return bad("sigma_eps must be positive".into());
        }
        if self.loading_var.is_some_and(|v| !(v >= 0.0)) || self.panel_scale.is_some_and(|v| !(v >= 0.0)) {
            return bad("loading_var and panel_scale must be non-negative".into());
        }
        Ok(())
    }

    /// Draws the study-level AR coefficients.
    pub fn resolve(&self) -> Result<ResolvedDgp> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::MAX);
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64), m: usize| -> Vec<f64> {
            (0..m).map(|_| if lo == hi { lo } else { rng.random_range(lo..hi) }).collect()
        };
        let rho_g = draw(&mut rng, self.rho_g, self.k);
        let rho_e = draw(&mut rng, self.rho_e, self.n);
        Ok(ResolvedDgp { cfg: self.clone(), rho_g, rho_e })
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedDgp {
    pub cfg: DgpConfig,
    pub rho_g: Vec<f64>,
    pub rho_e: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulated {
    /// Observed factors `(g_1, −1)` and, when `N > 0`, the panel.
    pub data: Dataset,
    /// `T×K` latent factors.
    pub g_true: DMatrix<f64>,
    pub lambda_true: DMatrix<f64>,
    pub d_true: Vec<u8>,
    pub params_true: ParamVector,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn ar_path(rng: &mut ChaCha8Rng, t: usize, burn: usize, rho: &[f64]) -> DMatrix<f64> {
    let m = rho.len();
    let mut cur = vec![0.0; m];
    let mut out = DMatrix::zeros(t, m);
    for s in 0..(burn + t) {
        for j in 0..m {
            let u = normal(rng);
            cur[j] = rho[j] * cur[j] + u;
        }
        if s >= burn {
            for j in 0..m {
                out[(s - burn, j)] = cur[j];
            }
        }
    }
    out
}

pub fn generate_dgp(dgp: &ResolvedDgp, rng: &mut ChaCha8Rng) -> Result<Simulated> {
    let c = &dgp.cfg;
    let (t, k, dx) = (c.t, c.k, c.dx);
    let x2 = ar_path(rng, t, c.burn_in, &vec![c.rho_x; dx - 1]);
    let g = ar_path(rng, t, c.burn_in, &dgp.rho_g);
    let eps = DVector::from_fn(t, |_, _| -> f64 { c.sigma_eps * normal(rng) });
    let x = DMatrix::from_fn(t, dx, |r, j| if j == 0 { 1.0 } else { x2[(r, j - 1)] });
    let f = with_constant(&g);
    let d_true = regime_indicator(&f, &c.phi0)?;
    let beta = DVector::from_column_slice(&c.beta0);
    let delta = DVector::from_column_slice(&c.delta0);
    let xb = &x * beta;
    let xd = &x * delta;
    let y = DVector::from_fn(t, |r, _| xb[r] + xd[r] * d_true[r] as f64 + eps[r]);
    let (lambda, panel) = if c.n > 0 {
        let sd = c.loading_var.unwrap_or(k as f64).sqrt();
        let lambda = DMatrix::from_fn(c.n, k, |_, _| -> f64 { sd * normal(rng) });
        let e = ar_path(rng, t, c.burn_in, &dgp.rho_e);
        let scale = c.panel_scale.unwrap_or((k as f64).sqrt());
        (lambda.clone(), Some(&g * lambda.transpose() + e * scale))
    } else {
        (DMatrix::zeros(0, k), None)
    };
    let data = Dataset::new(y, x, Some(f), panel)?;
    let params_true = ParamVector::new(c.beta0.clone(), c.delta0.clone(), c.phi0.clone())?;
    Ok(Simulated { data, g_true: g, lambda_true: lambda, d_true, params_true })
}

/// Sign-normalises the first PCA factor so the true index has a positive
/// first coefficient in the estimated basis, and returns that index
/// `H⁻¹φ₀` scaled to a leading 1. PCA leaves factor signs free while the
/// model fixes `γ₁ = 1`, so the harness picks the orientation the truth
/// implies.
pub fn orient_factors(fe: &mut FactorEstimate, sim: &Simulated) -> Result<Vec<f64>> {
    let rot = rotation_matrix(fe, &sim.g_true, &sim.lambda_true)?;
    let h_inv = rot.h.try_inverse().ok_or_else(|| Error::Singular("rotation matrix".into()))?;
    let mut v = h_inv * DVector::from_column_slice(&sim.params_true.gamma);
    if v[0] < 0.0 {
        fe.f1.column_mut(0).neg_mut();
        fe.f_full.column_mut(0).neg_mut();
        fe.lambda.column_mut(0).neg_mut();
        v[0] = -v[0];
    }
    if !(v[0].abs() > 1e-12) {
        return Err(Error::Singular("true index has no weight on the first estimated factor".into()));
    }
    let lead = v[0];
    Ok(v.iter().map(|x| x / lead).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// OLS at the true regimes.
    Oracle,
    /// Observed factors with the irrelevant ones known and dropped.
    ObservedNoSelection,
    /// Observed factors, relevant ones chosen by the ℓ0 penalty.
    ObservedSelection,
    /// PCA factors from the panel.
    Unobserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStudy {
    /// LR test of `γ₂ = 0` with observed factors.
    LrKnown,
    /// LR test of `γ₂ = 0` with PCA factors and re-estimated bootstrap factors.
    LrEstimated,
    /// Sup-Q test of linearity with observed factors.
    Linearity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub dgp: DgpConfig,
    pub reps: usize,
    pub gamma_bound: f64,
    /// Penalty for the selection scenario; `None` uses the default rule.
    pub lambda: Option<f64>,
    /// Constant in the residual-covariance threshold.
    pub c_thresh: f64,
    pub form: MiqpForm,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { dgp: DgpConfig::baseline(), reps: 200, gamma_bound: 5.0, lambda: None, c_thresh: 0.5, form: MiqpForm::Alternative }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamStat {
    pub name: String,
    pub bias: f64,
    pub rmse: f64,
    /// Share of 95% intervals covering the truth; `None` without standard errors.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RepRecord {
    pub names: Vec<String>,
    pub errors: Vec<f64>,
    pub covered: Vec<Option<bool>>,
    pub accuracy: Option<f64>,
    pub selected_correct: Option<bool>,
    pub reject: Option<bool>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub label: String,
    pub reps: usize,
    pub failed: usize,
    pub params: Vec<ParamStat>,
    pub accuracy_mean: Option<f64>,
    pub accuracy_sd: Option<f64>,
    pub selection_rate: Option<f64>,
    pub rejection_rate: Option<f64>,
    pub wall_time: f64,
    pub records: Vec<RepRecord>,
}

impl McReport {
    pub fn param(&self, name: &str) -> Option<&ParamStat> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Aggregates successful replications; `failed` counts the rest.
    pub fn from_records(label: &str, records: Vec<RepRecord>, failed: usize, wall_time: f64) -> Self {
        let n = records.len();
        let mean_of = |v: Vec<f64>| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
        let mut params = Vec::new();
        if let Some(first) = records.first() {
            for (j, name) in first.names.iter().enumerate() {
                let errs: Vec<f64> = records.iter().filter_map(|r| r.errors.get(j).copied()).collect();
                let m = errs.len().max(1) as f64;
                let bias = errs.iter().sum::<f64>() / m;
                let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / m).sqrt();
                let cov: Vec<f64> = records.iter().filter_map(|r| r.covered.get(j).copied().flatten()).map(|c| c as u8 as f64).collect();
                params.push(ParamStat { name: name.clone(), bias, rmse, coverage: mean_of(cov) });
            }
        }
        let acc: Vec<f64> = records.iter().filter_map(|r| r.accuracy).collect();
        let accuracy_mean = mean_of(acc.clone());
        let accuracy_sd = accuracy_mean.map(|m| {
            let dof = (acc.len().max(2) - 1) as f64;
            (acc.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / dof).sqrt()
        });
        let flags = |f: &dyn Fn(&RepRecord) -> Option<bool>| mean_of(records.iter().filter_map(f).map(|b| b as u8 as f64).collect());
        let selection_rate = flags(&|r| r.selected_correct);
        let rejection_rate = flags(&|r| r.reject);
        Self { label: label.into(), reps: n, failed, params, accuracy_mean, accuracy_sd, selection_rate, rejection_rate, wall_time, records }
    }
}

fn space_for(ds: &Dataset, df: usize, bound: f64) -> Result<SearchSpace> {
    let mut s = SearchSpace::default_for(ds, df)?;
    s.gamma2_lo = vec![-bound; df - 1];
    s.gamma2_hi = vec![bound; df - 1];
    Ok(s)
}

/// Factor columns kept when the irrelevant ones are known: column 0, every
/// column with a non-zero true coefficient and the constant.
pub fn relevant_columns(phi0: &[f64]) -> Vec<usize> {
    let last = phi0.len() - 1;
    (0..phi0.len()).filter(|&c| c == 0 || c == last || phi0[c] != 0.0).collect()
}

fn alpha_names(dx: usize) -> Vec<String> {
    (1..=dx).map(|j| format!("beta{j}")).chain((1..=dx).map(|j| format!("delta{j}"))).collect()
}

fn record_fit(ds: &Dataset, f: &DMatrix<f64>, fit: &EstimationResult, truth: &ParamVector, gamma_target: &[f64], d_true: &[u8]) -> RepRecord {
    let dx = ds.dx();
    let a_hat = fit.params.alpha();
    let a0 = truth.alpha();
    let se: Option<Vec<f64>> = alpha_covariance(ds, f, fit).ok().map(|v| (0..2 * dx).map(|j| v[(j, j)].max(0.0).sqrt()).collect());
    let mut names = alpha_names(dx);
    let mut errors: Vec<f64> = (0..2 * dx).map(|j| a_hat[j] - a0[j]).collect();
    let mut covered: Vec<Option<bool>> = (0..2 * dx).map(|j| se.as_ref().map(|s| (a_hat[j] - a0[j]).abs() <= 1.959964 * s[j])).collect();
    for j in 1..gamma_target.len() {
        names.push(format!("gamma{}", j + 1));
        errors.push(fit.params.gamma[j] - gamma_target[j]);
        covered.push(None);
    }
    let hits = fit.d.iter().zip(d_true).filter(|(a, b)| a == b).count();
    RepRecord { names, errors, covered, accuracy: Some(hits as f64 / d_true.len() as f64), ..Default::default() }
}

/// PCA factors for the panel of `sim`, sign-normalised, with the target index.
fn pca_for(sim: &Simulated, k: usize) -> Result<(FactorEstimate, Vec<f64>)> {
    let panel = sim.data.panel.as_ref().ok_or_else(|| invalid("the design has no panel (N = 0)"))?;
    let mut fe = estimate_factors(panel, k)?;
    let target = orient_factors(&mut fe, sim)?;
    Ok((fe, target))
}

fn one_rep(scenario: Scenario, cfg: &McConfig, dgp: &ResolvedDgp, r: usize, solver: &SolverConfig) -> Result<RepRecord> {
    let mut rng = replication_rng(cfg.dgp.seed, r);
    let sim = generate_dgp(dgp, &mut rng)?;
    let ds = &sim.data;
    let f_all = ds.factors.as_ref().expect("simulated data carries factors");
    let phi0 = &sim.params_true.gamma;
    let bcd = BcdConfig::default();
    match scenario {
        Scenario::Oracle => {
            let fit = ols_given_d(&ds.x, &ds.y, &sim.d_true);
            let params = ParamVector::from_alpha(&fit.alpha, phi0.clone())?;
            let objective = crate::model::ssr(ds, &params, f_all)?;
            let res = EstimationResult {
                params,
                objective,
                d: sim.d_true.clone(),
                gap: 0.0,
                status: crate::model::Status::Optimal,
                wall_time: 0.0,
                trace: vec![objective],
                degenerate: fit.degenerate,
                nodes_explored: 0,
            };
            Ok(record_fit(ds, f_all, &res, &sim.params_true, &[1.0], &sim.d_true))
        }
        Scenario::ObservedNoSelection => {
            let cols = relevant_columns(phi0);
            let f = f_all.select_columns(&cols);
            let space = space_for(ds, f.ncols(), cfg.gamma_bound)?;
            let fit = estimate(ds, &f, &space, Backend::Auto, cfg.form, solver, &bcd)?;
            let target: Vec<f64> = cols.iter().map(|&c| phi0[c]).collect();
            Ok(record_fit(ds, &f, &fit, &sim.params_true, &target, &sim.d_true))
        }
        Scenario::ObservedSelection => {
            let space = space_for(ds, f_all.ncols(), cfg.gamma_bound)?;
            let sel = SelectionConfig { lambda: cfg.lambda, form: cfg.form, ..Default::default() };
            let out = select_factors(ds, f_all, &space, &sel, solver)?;
            let f = f_all.select_columns(&out.active);
            let mut rec = record_fit(ds, &f, &out.refit, &sim.params_true, &[1.0], &sim.d_true);
            for (j, (g, p)) in out.gamma_full.iter().zip(phi0).enumerate().skip(1) {
                rec.names.push(format!("gamma{}", j + 1));
                rec.errors.push(g - p);
                rec.covered.push(None);
            }
            rec.selected_correct = Some(out.active == relevant_columns(phi0));
            Ok(rec)
        }
        Scenario::Unobserved => {
            let (fe, target) = pca_for(&sim, cfg.dgp.k)?;
            let space = space_for(ds, fe.f_full.ncols(), cfg.gamma_bound)?;
            let fit = estimate(ds, &fe.f_full, &space, Backend::Auto, cfg.form, solver, &bcd)?;
            Ok(record_fit(ds, &fe.f_full, &fit, &sim.params_true, &target, &sim.d_true))
        }
    }
}

fn collect(label: &str, start: Instant, raw: Vec<Result<RepRecord>>) -> McReport {
    let failed = raw.iter().filter(|r| r.is_err()).count();
    let records: Vec<RepRecord> = raw.into_iter().flatten().collect();
    McReport::from_records(label, records, failed, start.elapsed().as_secs_f64())
}

pub fn run_monte_carlo(scenario: Scenario, cfg: &McConfig, solver: &SolverConfig) -> Result<McReport> {
    if cfg.reps == 0 {
        return Err(invalid("reps must be positive"));
    }
    let start = Instant::now();
    let dgp = cfg.dgp.resolve()?;
    let raw: Vec<Result<RepRecord>> = (0..cfg.reps).into_par_iter().map(|r| one_rep(scenario, cfg, &dgp, r, solver)).collect();
    Ok(collect(&format!("{scenario:?}"), start, raw))
}

/// Rejection frequency of a bootstrap test over simulated samples. The LR
/// studies test that the coefficient on the first non-leading factor column is zero.
pub fn run_test_study(
    study: TestStudy,
    cfg: &McConfig,
    boot: &BootstrapConfig,
    lin: &LinearityConfig,
    solver: &SolverConfig,
) -> Result<McReport> {
    if cfg.reps == 0 {
        return Err(invalid("reps must be positive"));
    }
    let start = Instant::now();
    let dgp = cfg.dgp.resolve()?;
    let one = |r: usize| -> Result<RepRecord> {
        let mut rng = replication_rng(cfg.dgp.seed, r);
        let sim = generate_dgp(&dgp, &mut rng)?;
        let seed: u64 = rng.random();
        let ds = &sim.data;
        let f_all = ds.factors.as_ref().expect("simulated data carries factors");
        let (reject, p) = match study {
            TestStudy::LrKnown | TestStudy::Linearity => {
                let f = f_all.select_columns(&relevant_columns(&sim.params_true.gamma));
                let space = space_for(ds, f.ncols(), cfg.gamma_bound)?;
                if study == TestStudy::Linearity {
                    let out = linearity_test(ds, &f, &space, &LinearityConfig { seed, ..lin.clone() }, solver)?;
                    (out.reject, out.p_value)
                } else {
                    let h = HypothesisSpec::zero(f.ncols(), 0);
                    let b = BootstrapConfig { seed, factor_mode: FactorMode::Known, ..boot.clone() };
                    let out = bootstrap_lr(ds, FactorSource::Observed(&f), &space, &h, &b, solver)?;
                    (out.reject, out.p_value)
                }
            }
            TestStudy::LrEstimated => {
                let (fe, _) = pca_for(&sim, cfg.dgp.k)?;
                let sigma_e = threshold_covariance(&fe.e, cfg.c_thresh)?;
                let space = space_for(ds, fe.f_full.ncols(), cfg.gamma_bound)?;
                let h = HypothesisSpec::zero(fe.f_full.ncols(), 0);
                let mode = if boot.factor_mode == FactorMode::Known { FactorMode::PcaReestimate } else { boot.factor_mode };
                let b = BootstrapConfig { seed, factor_mode: mode, ..boot.clone() };
                let out = bootstrap_lr(ds, FactorSource::Estimated { fe: &fe, sigma_e: &sigma_e }, &space, &h, &b, solver)?;
                (out.reject, out.p_value)
            }
        };
        Ok(RepRecord { reject: Some(reject), p_value: Some(p), ..Default::default() })
    };
    let raw: Vec<Result<RepRecord>> = (0..cfg.reps).into_par_iter().map(one).collect();
    Ok(collect(&format!("{study:?}"), start, raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    /// `ω ∈ [0, ∞]`; written as the string `"inf"` in JSON when infinite.
    #[serde(with = "omega_json")]
    pub omega: f64,
    pub g_grid: Vec<f64>,
    /// Antithetic pairs per grid point.
    pub mc_draws: usize,
    /// Standard deviation of the Gaussian factor-error term.
    pub sigma_h: f64,
    /// Density of the threshold variable at zero; `None` uses the standard normal.
    pub p_u0: Option<f64>,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self { omega: 1.0, g_grid: (0..=20).map(|i| -2.0 + 0.2 * i as f64).collect(), mc_draws: 200_000, sigma_h: 1.0, p_u0: None, seed: 0 }
    }
}

mod omega_json {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftCurve {
    #[serde(with = "omega_json")]
    pub omega: f64,
    pub g: Vec<f64>,
    pub a: Vec<f64>,
    /// Monte Carlo standard errors; zero on the analytic branches.
    pub se: Vec<f64>,
}

/// `M_ω = max(1, ω^{-1/3})` and `ζ_ω = max(ω, ω^{1/3})`.
pub fn drift_scales(omega: f64) -> (f64, f64) {
    if omega.is_infinite() {
        return (1.0, f64::INFINITY);
    }
    let c = omega.cbrt();
    ((1.0 / c).max(1.0), omega.max(c))
}

/// `A(ω, g)` for the scalar design with unit regressor and unit jump.
///
/// `ω = 0` uses the quadratic limit `g²·p_u(0)·p_𝒵(0)`, `ω = ∞` the kink
/// `|g|·p_u(0)`; in between the expectation over `𝒵 ~ N(0, σ_h²)` is taken
/// by Monte Carlo with antithetic pairs `±𝒵`.
pub fn drift_function(cfg: &DriftConfig) -> Result<DriftCurve> {
    if !(cfg.omega >= 0.0) {
        return Err(invalid("omega must be non-negative"));
    }
    if cfg.mc_draws == 0 || !(cfg.sigma_h > 0.0) {
        return Err(invalid("need mc_draws >= 1 and sigma_h > 0"));
    }
    let pu = cfg.p_u0.unwrap_or(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    let n = cfg.g_grid.len();
    if cfg.omega == 0.0 {
        let pz = 1.0 / (cfg.sigma_h * (2.0 * std::f64::consts::PI).sqrt());
        return Ok(DriftCurve { omega: 0.0, g: cfg.g_grid.clone(), a: cfg.g_grid.iter().map(|g| g * g * pu * pz).collect(), se: vec![0.0; n] });
    }
    if cfg.omega.is_infinite() {
        return Ok(DriftCurve { omega: cfg.omega, g: cfg.g_grid.clone(), a: cfg.g_grid.iter().map(|g| g.abs() * pu).collect(), se: vec![0.0; n] });
    }
    let (m, zeta) = drift_scales(cfg.omega);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Common draws across the grid keep the curve smooth.
    let z: Vec<f64> = (0..cfg.mc_draws).map(|_| -> f64 { cfg.sigma_h / zeta * normal(&mut rng) }).collect();
    let draws = z.len() as f64;
    let mut a = Vec::with_capacity(n);
    let mut se = Vec::with_capacity(n);
    for &g in &cfg.g_grid {
        let (mut s, mut s2) = (0.0, 0.0);
        for &w in &z {
            let v = m * pu * (0.5 * ((g + w).abs() + (g - w).abs()) - w.abs());
            s += v;
            s2 += v * v;
        }
        let mean = s / draws;
        let var = if z.len() > 1 { ((s2 - draws * mean * mean) / (draws - 1.0)).max(0.0) } else { 0.0 };
        a.push(mean);
        se.push((var / draws).sqrt());
    }
    Ok(DriftCurve { omega: cfg.omega, g: cfg.g_grid.clone(), a, se })
}
