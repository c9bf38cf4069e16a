//! Likelihood-ratio inference on the threshold index and the sup-Q test of
//! linearity, both with wild-bootstrap critical values.
//!
//! Replication `b` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to
//! stream `b`, so serial and parallel runs produce identical draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Error, Result};
use crate::estimator::{estimate, estimate_restricted, gamma_step, min_free_ssr, ols_given_d, Backend, BcdConfig, MiqpForm, Restriction};
use crate::linalg;
use crate::model::{build_design, check_factors, ols, regime_indicator, ssr_given_d, Dataset, EstimationResult, SearchSpace};
use crate::optim::SolverConfig;
use crate::pca::{factor_noise_covariance, FactorEstimate};

/// Linear hypothesis `Rγ = r` on the full threshold vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisSpec {
    /// Rows of `R`, each of length `d_f`.
    pub r_mat: Vec<Vec<f64>>,
    pub r: Vec<f64>,
    #[serde(default)]
    pub label: String,
}

impl HypothesisSpec {
    /// `γ₂[k] = 0`, the usual "factor k+1 is irrelevant" null.
    pub fn zero(df: usize, k: usize) -> Self {
        let mut row = vec![0.0; df];
        row[k + 1] = 1.0;
        Self { r_mat: vec![row], r: vec![0.0], label: format!("gamma[{}] = 0", k + 1) }
    }

    pub fn restriction(&self, df: usize) -> Result<Restriction> {
        if self.r_mat.iter().any(|row| row.len() != df) {
            return Err(dim(format!("hypothesis rows must have {df} entries")));
        }
        let m = DMatrix::from_fn(self.r_mat.len(), df, |i, j| self.r_mat[i][j]);
        Restriction::new(m, DVector::from_column_slice(&self.r))
    }

    /// `Rγ − r`.
    pub fn value(&self, gamma: &[f64]) -> Vec<f64> {
        self.r_mat.iter().zip(&self.r).map(|(row, r)| row.iter().zip(gamma).map(|(a, b)| a * b).sum::<f64>() - r).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightDist {
    #[default]
    Rademacher,
    StdNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FactorMode {
    /// Bootstrap factors equal the estimation factors.
    #[default]
    Known,
    /// Simulate a new panel and re-run PCA in every replication.
    PcaReestimate,
    /// Add Gaussian noise with the estimated factor-error covariance.
    GaussianPerturb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub b: usize,
    pub k: usize,
    pub weight_dist: WeightDist,
    pub factor_mode: FactorMode,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b: 199, k: 2, weight_dist: WeightDist::Rademacher, factor_mode: FactorMode::Known, seed: 0, level: 0.05 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(invalid("bootstrap needs at least one replication"));
        }
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid(format!("level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

/// Factors entering the bootstrap.
#[derive(Debug, Clone, Copy)]
pub enum FactorSource<'a> {
    Observed(&'a DMatrix<f64>),
    /// PCA output and the idiosyncratic covariance used to simulate panels.
    Estimated { fe: &'a FactorEstimate, sigma_e: &'a DMatrix<f64> },
}

impl FactorSource<'_> {
    pub fn factors(&self) -> &DMatrix<f64> {
        match self {
            FactorSource::Observed(f) => f,
            FactorSource::Estimated { fe, .. } => &fe.f_full,
        }
    }
}

/// Per-replication generator under the counter scheme.
pub fn replication_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

pub fn wild_weights<R: Rng + ?Sized>(t: usize, dist: WeightDist, rng: &mut R) -> DVector<f64> {
    match dist {
        WeightDist::Rademacher => DVector::from_fn(t, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }),
        WeightDist::StdNormal => DVector::from_fn(t, |_, _| -> f64 { StandardNormal.sample(rng) }),
    }
}

/// `R` with `RR' = S`: Cholesky when it succeeds, the symmetric root otherwise.
fn any_root(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.amax() == 0.0 {
        return Ok(DMatrix::zeros(s.nrows(), s.ncols()));
    }
    match s.clone().cholesky() {
        Some(ch) => Ok(ch.l()),
        None => linalg::psd_sqrt(s, 1e-8),
    }
}

/// Re-estimated bootstrap factors, prepared once per data set.
///
/// Simulated panels are `Λ̂f̃_t + R W_t` with `RR' = Σ_e`. The top
/// eigenvectors are found by subspace iteration without forming the panel,
/// started from `f̃`, which already spans the leading space when the noise
/// is small.
#[derive(Debug, Clone)]
pub struct PcaResampler {
    f1: DMatrix<f64>,
    lambda: DMatrix<f64>,
    root: DMatrix<f64>,
    s_lambda: DMatrix<f64>,
}

impl PcaResampler {
    pub fn new(fe: &FactorEstimate, sigma_e: &DMatrix<f64>) -> Result<Self> {
        let n = fe.lambda.nrows();
        if sigma_e.shape() != (n, n) {
            return Err(dim(format!("residual covariance must be {n}x{n}")));
        }
        let root = any_root(sigma_e)?;
        let s_lambda = fe.lambda.tr_mul(&fe.lambda) / n as f64;
        Ok(Self { f1: fe.f1.clone(), lambda: fe.lambda.clone(), root, s_lambda })
    }

    /// One draw of `f*` (with the constant column). `None` when the rotation is singular.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<DMatrix<f64>> {
        let (t, k) = self.f1.shape();
        let n = self.lambda.nrows();
        let w = DMatrix::from_fn(t, n, |_, _| -> f64 { StandardNormal.sample(rng) });
        let scale = 1.0 / (n as f64 * t as f64);
        // Y = f̃Λ̂' + W R'.
        let apply = |q: &DMatrix<f64>| -> DMatrix<f64> {
            let yt_q = &self.lambda * self.f1.tr_mul(q) + &self.root * w.tr_mul(q);
            (&self.f1 * self.lambda.tr_mul(&yt_q) + &w * self.root.tr_mul(&yt_q)) * scale
        };
        let (vecs, vals) = subspace_top(apply, &self.f1, k, t)?;
        let root_t = (t as f64).sqrt();
        let f_star1 = vecs * root_t;
        // H*' = V*⁻¹ (1/T) Σ F*_t f̃_t' Ŝ_Λ, and f*_t = H*'⁻¹ F*_t.
        let mut hp = f_star1.tr_mul(&self.f1) / t as f64 * &self.s_lambda;
        for r in 0..k {
            if !(vals[r] > 0.0) {
                return None;
            }
            hp.row_mut(r).scale_mut(1.0 / vals[r]);
        }
        let hp_inv = hp.try_inverse()?;
        let f1 = f_star1 * hp_inv.transpose();
        linalg::all_finite(&f1).then(|| crate::model::with_constant(&f1))
    }
}

/// Leading `k` eigenpairs of a symmetric PSD operator on `R^t` by subspace
/// iteration with Rayleigh–Ritz, falling back to a dense eigensolve.
fn subspace_top(apply: impl Fn(&DMatrix<f64>) -> DMatrix<f64>, init: &DMatrix<f64>, k: usize, t: usize) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let mut q = init.clone().qr().q();
    let mut prev = DVector::from_element(k, f64::NAN);
    for _ in 0..500 {
        let z = apply(&q);
        let small = q.tr_mul(&z);
        let small = (&small + small.transpose()) * 0.5;
        let eig = small.symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let rot = DMatrix::from_fn(k, k, |i, j| eig.eigenvectors[(i, order[j])]);
        let vals = DVector::from_fn(k, |i, _| eig.eigenvalues[order[i]]);
        let ritz = &q * &rot;
        let az = &z * &rot;
        let top = vals[0].abs().max(f64::MIN_POSITIVE);
        let resid = (0..k).map(|j| (az.column(j) - ritz.column(j) * vals[j]).norm()).fold(0.0, f64::max);
        let settled = (&vals - &prev).amax() <= 1e-14 * top;
        if resid <= 1e-10 * top || settled {
            return Some((ritz, vals));
        }
        prev = vals;
        q = az.qr().q();
    }
    // Dense fallback on the explicit Gram matrix.
    let g = apply(&DMatrix::identity(t, t));
    let g = (&g + g.transpose()) * 0.5;
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vecs = DMatrix::from_fn(t, k, |i, j| eig.eigenvectors[(i, order[j])]);
    let vals = DVector::from_fn(k, |i, _| eig.eigenvalues[order[i]]);
    Some((vecs, vals))
}

/// `f*` from a freshly simulated panel, rotated back onto `f̃`.
pub fn regenerate_factors_pca<R: Rng + ?Sized>(fe: &FactorEstimate, sigma_e: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    PcaResampler::new(fe, sigma_e)?
        .draw(rng)
        .ok_or_else(|| Error::Singular("bootstrap rotation matrix".into()))
}

/// Gaussian-perturbed factors, prepared once per data set.
#[derive(Debug, Clone)]
pub struct GaussianPerturber {
    f: DMatrix<f64>,
    /// `N^{-1/2} Σ_h^{1/2}`.
    root: DMatrix<f64>,
}

impl GaussianPerturber {
    pub fn new(f_full: &DMatrix<f64>, sigma_h: &DMatrix<f64>, n: usize) -> Result<Self> {
        let k = f_full.ncols() - 1;
        if sigma_h.shape() != (k, k) {
            return Err(dim(format!("factor covariance must be {k}x{k}")));
        }
        if n == 0 {
            return Err(invalid("cross-section size must be positive"));
        }
        let root = any_root(sigma_h)? / (n as f64).sqrt();
        Ok(Self { f: f_full.clone(), root })
    }

    pub fn from_estimate(fe: &FactorEstimate, sigma_e: &DMatrix<f64>) -> Result<Self> {
        let sigma_h = factor_noise_covariance(&fe.lambda, sigma_e)?;
        Self::new(&fe.f_full, &sigma_h, fe.lambda.nrows())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let (t, df) = self.f.shape();
        let k = df - 1;
        let w = DMatrix::from_fn(t, k, |_, _| -> f64 { StandardNormal.sample(rng) });
        let mut out = self.f.clone();
        let noise = w * self.root.transpose();
        out.view_mut((0, 0), (t, k)).zip_apply(&noise, |a, b| *a += b);
        out
    }
}

/// `f̃_t + N^{-1/2} Σ_h^{1/2} W_t` on the factor block; the constant column is untouched.
pub fn perturb_factors_gaussian<R: Rng + ?Sized>(f_full: &DMatrix<f64>, sigma_h: &DMatrix<f64>, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    Ok(GaussianPerturber::new(f_full, sigma_h, n)?.draw(rng))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrOutcome {
    pub lr: f64,
    pub unrestricted: EstimationResult,
    pub restricted: EstimationResult,
}

/// `(S_h − S)/S` with both minimisations run to optimality.
///
/// The unrestricted value used is `min(S, S_h)`: the restricted set is a
/// subset, so a lower restricted value is also an unrestricted point.
pub fn lr_statistic(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace, h: &HypothesisSpec, solver: &SolverConfig) -> Result<LrOutcome> {
    let restr = h.restriction(factors.ncols())?;
    let unrestricted = estimate(ds, factors, space, Backend::Auto, MiqpForm::Alternative, solver, &BcdConfig::default())?;
    let restricted = estimate_restricted(ds, factors, space, &restr, Backend::Auto, MiqpForm::Alternative, solver)?;
    let s = unrestricted.objective.min(restricted.objective);
    Ok(LrOutcome { lr: ratio(restricted.objective, s), unrestricted, restricted })
}

fn ratio(s_h: f64, s: f64) -> f64 {
    if s > 0.0 {
        ((s_h - s) / s).max(0.0)
    } else if s_h > s {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Bootstrap outcome `y* = Z̃(γ̂)'α̂ + η·ε̂`.
pub fn bootstrap_outcome(fitted: &DVector<f64>, resid: &DVector<f64>, eta: &DVector<f64>) -> DVector<f64> {
    fitted + resid.component_mul(eta)
}

/// `k` alternations of the closed-form α step and the exact γ step from
/// `gamma0`. Returns the objective after each step and the final γ.
pub fn k_step_chain(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    f: &DMatrix<f64>,
    space: &SearchSpace,
    gamma0: &[f64],
    k: usize,
    restriction: Option<&Restriction>,
    solver: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = y.len() as f64;
    let dx = x.ncols();
    let ds = Dataset { y: y.clone(), x: x.clone(), factors: None, panel: None };
    let mut gamma = gamma0.to_vec();
    let mut trace = Vec::with_capacity(k);
    for _ in 0..k {
        let d = regime_indicator(f, &gamma)?;
        let alpha = ols_given_d(x, y, &d).alpha;
        let (beta, delta) = (&alpha.as_slice()[..dx], &alpha.as_slice()[dx..]);
        let (g, d, _) = gamma_step(&ds, f, space, beta, delta, restriction, Some(&gamma), solver)?;
        trace.push(ssr_given_d(x, y, beta, delta, &d) / t);
        gamma = g;
    }
    Ok((trace, gamma))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub lr: f64,
    pub cv: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Successful draws in replication order.
    pub draws: Vec<f64>,
    pub failed: usize,
    pub unrestricted: EstimationResult,
    pub restricted: EstimationResult,
}

/// `(1 + #{draws ≥ stat}) / (B + 1)`.
pub fn bootstrap_p_value(stat: f64, draws: &[f64]) -> f64 {
    let hits = draws.iter().filter(|&&v| v >= stat).count();
    (1 + hits) as f64 / (draws.len() + 1) as f64
}

/// The order statistic at `⌈(1 − a)(B + 1)⌉`, capped at the largest draw.
pub fn bootstrap_cv(draws: &[f64], level: f64) -> f64 {
    if draws.is_empty() {
        return f64::NAN;
    }
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = ((1.0 - level) * (s.len() + 1) as f64 - 1e-9).ceil() as usize;
    s[idx.clamp(1, s.len()) - 1]
}

enum Perturb {
    Fixed,
    Pca(PcaResampler),
    Gauss(GaussianPerturber),
}

/// k-step wild bootstrap of the LR statistic for `h`.
pub fn bootstrap_lr(
    ds: &Dataset,
    source: FactorSource<'_>,
    space: &SearchSpace,
    h: &HypothesisSpec,
    cfg: &BootstrapConfig,
    solver: &SolverConfig,
) -> Result<BootstrapOutcome> {
    cfg.validate()?;
    let f = source.factors();
    check_factors(f, ds.t())?;
    let restr = h.restriction(f.ncols())?;
    let perturb = match (cfg.factor_mode, source) {
        (FactorMode::Known, _) => Perturb::Fixed,
        (FactorMode::PcaReestimate, FactorSource::Estimated { fe, sigma_e }) => Perturb::Pca(PcaResampler::new(fe, sigma_e)?),
        (FactorMode::GaussianPerturb, FactorSource::Estimated { fe, sigma_e }) => Perturb::Gauss(GaussianPerturber::from_estimate(fe, sigma_e)?),
        (_, FactorSource::Observed(_)) => return Err(invalid("factor re-estimation needs PCA factors and a residual covariance")),
    };
    let obs = lr_statistic(ds, f, space, h, solver)?;
    let d_hat = &obs.unrestricted.d;
    let z = build_design(&ds.x, d_hat)?;
    let fitted = z * obs.unrestricted.params.alpha();
    let resid = &ds.y - &fitted;
    let gamma_u = obs.unrestricted.params.gamma.clone();
    let gamma_r = obs.restricted.params.gamma.clone();
    // The bootstrap null is centred at the unrestricted estimate.
    let g_hat = DVector::from_column_slice(&gamma_u);
    let restr_star = Restriction::new(restr.r_mat.clone(), &restr.r_mat * g_hat)?;

    let one = |b: usize| -> Option<f64> {
        let mut rng = replication_rng(cfg.seed, b);
        let eta = wild_weights(ds.t(), cfg.weight_dist, &mut rng);
        let f_star = match &perturb {
            Perturb::Fixed => f.clone(),
            Perturb::Gauss(g) => g.draw(&mut rng),
            Perturb::Pca(p) => (0..3).find_map(|_| p.draw(&mut rng))?,
        };
        let y_star = bootstrap_outcome(&fitted, &resid, &eta);
        let (su, _) = k_step_chain(&ds.x, &y_star, &f_star, space, &gamma_u, cfg.k, None, solver).ok()?;
        let (sr, _) = k_step_chain(&ds.x, &y_star, &f_star, space, &gamma_r, cfg.k, Some(&restr_star), solver).ok()?;
        let (s, s_h) = (*su.last()?, *sr.last()?);
        Some(ratio(s_h, s.min(s_h)))
    };
    let raw: Vec<Option<f64>> = (0..cfg.b).into_par_iter().map(one).collect();
    let failed = raw.iter().filter(|v| v.is_none()).count();
    if failed as f64 > 0.05 * cfg.b as f64 {
        return Err(Error::Solver(format!("{failed} of {} bootstrap replications failed", cfg.b)));
    }
    let draws: Vec<f64> = raw.into_iter().flatten().collect();
    let p_value = bootstrap_p_value(obs.lr, &draws);
    Ok(BootstrapOutcome {
        lr: obs.lr,
        cv: bootstrap_cv(&draws, cfg.level),
        p_value,
        reject: p_value <= cfg.level,
        draws,
        failed,
        unrestricted: obs.unrestricted,
        restricted: obs.restricted,
    })
}

/// `T·(SSR_lin − min_γ SSR_γ)/min_γ SSR_γ`, the supremum taken over every
/// regime pattern in the share window or over `candidates` when given.
/// A perfect fit under the alternative gives `+∞`.
pub fn sup_q(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace, candidates: Option<&[Vec<f64>]>) -> Result<f64> {
    ds.validate()?;
    check_factors(factors, ds.t())?;
    let t = ds.t();
    let lin = ols(&ds.x, &ds.y);
    let ssr_lin = (&ds.y - &ds.x * lin.coef).norm_squared();
    let best = match candidates {
        None => min_free_ssr(&ds.x, &ds.y, factors, space)?,
        Some(list) => {
            let mut best = f64::INFINITY;
            for g in list {
                let d = regime_indicator(factors, g)?;
                if !space.share_ok(d.iter().filter(|&&v| v != 0).count(), t) {
                    continue;
                }
                let fit = ols_given_d(&ds.x, &ds.y, &d);
                let z = build_design(&ds.x, &d)?;
                best = best.min((&ds.y - z * fit.alpha).norm_squared());
            }
            if best.is_infinite() {
                return Err(Error::Infeasible("no candidate satisfies the share bounds".into()));
            }
            best
        }
    };
    let scale = ds.y.norm_squared().max(1.0);
    if best <= 1e-14 * scale {
        return Ok(if ssr_lin <= 1e-14 * scale { 0.0 } else { f64::INFINITY });
    }
    Ok((t as f64 * (ssr_lin - best) / best).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearityConfig {
    pub b: usize,
    pub weight_dist: WeightDist,
    pub seed: u64,
    pub level: f64,
}

impl Default for LinearityConfig {
    fn default() -> Self {
        Self { b: 199, weight_dist: WeightDist::Rademacher, seed: 0, level: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearityOutcome {
    pub stat: f64,
    /// Share of bootstrap statistics strictly above `stat`.
    pub p_value: f64,
    pub cv: f64,
    pub reject: bool,
    pub draws: Vec<f64>,
    pub fit: EstimationResult,
}

/// Bootstrap sup-Q test of `δ = 0` with `y* = x'β̂ + η·ε̂` from the threshold fit.
pub fn linearity_test(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace, cfg: &LinearityConfig, solver: &SolverConfig) -> Result<LinearityOutcome> {
    if cfg.b == 0 {
        return Err(invalid("linearity test needs at least one bootstrap replication"));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(invalid(format!("level must lie in (0, 1), got {}", cfg.level)));
    }
    let fit = estimate(ds, factors, space, Backend::Auto, MiqpForm::Alternative, solver, &BcdConfig::default())?;
    // Beyond the sweep's reach the supremum runs over the fitted index alone.
    let grid = (factors.ncols() > 4).then(|| vec![fit.params.gamma.clone()]);
    let stat = sup_q(ds, factors, space, grid.as_deref())?;
    let z = build_design(&ds.x, &fit.d)?;
    let resid = &ds.y - z * fit.params.alpha();
    let base = &ds.x * DVector::from_column_slice(&fit.params.beta);
    let draws: Vec<Option<f64>> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = replication_rng(cfg.seed, b);
            let eta = wild_weights(ds.t(), cfg.weight_dist, &mut rng);
            let star = ds.with_y(bootstrap_outcome(&base, &resid, &eta));
            sup_q(&star, factors, space, grid.as_deref()).ok()
        })
        .collect();
    let failed = draws.iter().filter(|v| v.is_none()).count();
    if failed as f64 > 0.05 * cfg.b as f64 {
        return Err(Error::Solver(format!("{failed} of {} bootstrap replications failed", cfg.b)));
    }
    let draws: Vec<f64> = draws.into_iter().flatten().collect();
    let above = draws.iter().filter(|&&v| v > stat).count();
    let p_value = above as f64 / draws.len() as f64;
    Ok(LinearityOutcome { stat, p_value, cv: bootstrap_cv(&draws, cfg.level), reject: p_value <= cfg.level, draws, fit })
}
