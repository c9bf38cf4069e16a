//! Least-squares estimation of the two-regime model.
//!
//! Three backends share one result type: the mixed-integer program
//! ([`estimate_miqp`]), the exact sweep over regime patterns
//! ([`estimate_exact`], threshold index with at most three free coefficients)
//! and block coordinate descent ([`bcd`]) for large designs.

mod bcd;
mod exact;
mod miqp;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Error, Result};
use crate::linalg;
use crate::model::{build_design, regime_indicator, ssr_given_d, Dataset, EstimationResult, SearchSpace};
use crate::optim::SolverConfig;

pub use bcd::{bcd, gamma_step, BcdConfig};
pub use exact::{estimate_exact, estimate_exact_restricted, milp_exact};
pub(crate) use exact::min_free_ssr;
pub use miqp::{build_miqp, build_miqp_restricted, estimate_miqp, estimate_miqp_restricted, MiqpLayout};
pub(crate) use miqp::RegimeHooks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MiqpForm {
    Basic,
    #[default]
    Alternative,
}

/// Which estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Exact sweep when the index has at most three free coefficients, MIQP otherwise.
    #[default]
    Auto,
    Exact,
    Miqp,
    Bcd,
}

/// Linear restriction `Rγ = r` on the full threshold vector (γ₁ = 1 included).
#[derive(Debug, Clone, PartialEq)]
pub struct Restriction {
    pub r_mat: DMatrix<f64>,
    pub r: DVector<f64>,
}

impl Restriction {
    pub fn new(r_mat: DMatrix<f64>, r: DVector<f64>) -> Result<Self> {
        if r_mat.nrows() != r.len() {
            return Err(dim(format!("R has {} rows, r has {} entries", r_mat.nrows(), r.len())));
        }
        if r_mat.nrows() == 0 || r_mat.ncols() < 2 {
            return Err(invalid("restriction needs at least one row and a free threshold coefficient"));
        }
        if !linalg::all_finite(&r_mat) || !r.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("restriction"));
        }
        let r2 = r_mat.columns(1, r_mat.ncols() - 1).into_owned();
        let sv = r2.singular_values();
        let tol = sv.max() * 1e-10 * r2.nrows().max(r2.ncols()) as f64;
        if sv.iter().filter(|&&s| s > tol).count() < r_mat.nrows() {
            return Err(invalid("restriction rows must be linearly independent in the free coefficients"));
        }
        Ok(Self { r_mat, r })
    }

    /// `γ₂[k] = value` for a single coordinate.
    pub fn fix(df: usize, k: usize, value: f64) -> Result<Self> {
        let mut m = DMatrix::zeros(1, df);
        if k + 1 >= df {
            return Err(dim(format!("coordinate {k} out of range for {df} factors")));
        }
        m[(0, k + 1)] = 1.0;
        Self::new(m, DVector::from_element(1, value))
    }

    pub fn df(&self) -> usize {
        self.r_mat.ncols()
    }

    /// The rows as constraints on γ₂ alone: `R₂γ₂ = r − R[:,0]`.
    pub fn on_gamma2(&self) -> (DMatrix<f64>, DVector<f64>) {
        let r2 = self.r_mat.columns(1, self.df() - 1).into_owned();
        let rhs = &self.r - self.r_mat.column(0);
        (r2, rhs)
    }

    /// Pinned coordinates when every row touches exactly one γ₂ coordinate.
    pub fn as_fixings(&self) -> Option<Vec<Option<f64>>> {
        let (r2, rhs) = self.on_gamma2();
        let mut out = vec![None; r2.ncols()];
        for i in 0..r2.nrows() {
            let nz: Vec<usize> = (0..r2.ncols()).filter(|&k| r2[(i, k)] != 0.0).collect();
            if nz.len() != 1 || out[nz[0]].is_some() {
                return None;
            }
            out[nz[0]] = Some(rhs[i] / r2[(i, nz[0])]);
        }
        Some(out)
    }

    pub fn satisfied(&self, gamma: &[f64], tol: f64) -> bool {
        let g = DVector::from_column_slice(gamma);
        (&self.r_mat * g - &self.r).amax() <= tol
    }
}

/// `M_t = max |f_t'γ|` over the box with γ₁ = 1.
pub fn compute_mt(f_t: &[f64], space: &SearchSpace) -> f64 {
    let (mut up, mut low) = (f_t[0], f_t[0]);
    for (k, &v) in f_t[1..].iter().enumerate() {
        let a = v * space.gamma2_lo[k];
        let b = v * space.gamma2_hi[k];
        up += a.max(b);
        low += a.min(b);
    }
    up.abs().max(low.abs())
}

/// Mean absolute disagreement between two regime vectors.
pub fn classification_error(d_hat: &[u8], d_ref: &[u8]) -> Result<f64> {
    if d_hat.len() != d_ref.len() {
        return Err(dim(format!("regime vectors have lengths {} and {}", d_hat.len(), d_ref.len())));
    }
    if d_hat.is_empty() {
        return Ok(0.0);
    }
    let miss = d_hat.iter().zip(d_ref).filter(|(a, b)| (**a != 0) != (**b != 0)).count();
    Ok(miss as f64 / d_hat.len() as f64)
}

#[derive(Debug, Clone)]
pub struct AlphaFit {
    pub alpha: DVector<f64>,
    /// A regime was empty or the design was rank deficient.
    pub degenerate: bool,
}

/// Least squares of `y` on `Z(γ)`.
pub fn ols_given_gamma(ds: &Dataset, factors: &DMatrix<f64>, gamma: &[f64]) -> Result<AlphaFit> {
    if factors.nrows() != ds.t() {
        return Err(dim("factor rows differ from sample size"));
    }
    let d = regime_indicator(factors, gamma)?;
    Ok(ols_given_d(&ds.x, &ds.y, &d))
}

pub(crate) fn ols_given_d(x: &DMatrix<f64>, y: &DVector<f64>, d: &[u8]) -> AlphaFit {
    let (t, dx) = x.shape();
    let n1 = d.iter().filter(|&&v| v != 0).count();
    if n1 == 0 || n1 == t {
        // δ is not identified; keep the linear fit in β.
        let fit = crate::model::ols(x, y);
        let mut alpha = DVector::zeros(2 * dx);
        alpha.rows_mut(0, dx).copy_from(&fit.coef);
        return AlphaFit { alpha, degenerate: true };
    }
    let z = build_design(x, d).expect("lengths checked by caller");
    let fit = crate::model::ols(&z, y);
    AlphaFit { alpha: fit.coef, degenerate: fit.rank_deficient }
}

/// Least squares over the α box for a fixed regime pattern. Returns `(α, S_T, degenerate)`.
pub(crate) fn fit_alpha_box(x: &DMatrix<f64>, y: &DVector<f64>, d: &[u8], space: &SearchSpace) -> (DVector<f64>, f64, bool) {
    let dx = x.ncols();
    let free = ols_given_d(x, y, d);
    let alpha = if space.alpha_in_box(&free.alpha) {
        free.alpha
    } else {
        let z = build_design(x, d).expect("lengths checked by caller");
        linalg::box_qp(&z.tr_mul(&z), &z.tr_mul(y), &space.alpha_lo, &space.alpha_hi)
    };
    let (b, dl) = (alpha.rows(0, dx), alpha.rows(dx, dx));
    let s = ssr_given_d(x, y, b.as_slice(), dl.as_slice(), d);
    (alpha, s, free.degenerate)
}

/// A threshold vector `γ = (1, γ₂)` in the box realising `d` with the ε rule
/// (`f_t'γ ≥ ε` when `d_t = 1`, `f_t'γ ≤ 0` otherwise), chosen to maximise
/// the normalised margin to the cell walls. `None` when no such γ exists.
pub(crate) fn separating_gamma(
    f: &DMatrix<f64>,
    d: &[u8],
    space: &SearchSpace,
    eps: f64,
    restriction: Option<&Restriction>,
) -> Option<Vec<f64>> {
    let (t, df) = f.shape();
    let dg = df - 1;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let g: Vec<_> = (0..dg).map(|k| lp.add_var(0.0, (space.gamma2_lo[k], space.gamma2_hi[k]))).collect();
    let s = lp.add_var(1.0, (0.0, 1e6));
    for r in 0..t {
        let nn: f64 = (1..df).map(|k| f[(r, k)] * f[(r, k)]).sum::<f64>().sqrt();
        let mut expr: Vec<(minilp::Variable, f64)> = (0..dg).filter(|&k| f[(r, k + 1)] != 0.0).map(|k| (g[k], f[(r, k + 1)])).collect();
        if d[r] != 0 {
            expr.push((s, -nn));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, eps - f[(r, 0)]);
        } else {
            expr.push((s, nn));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, -f[(r, 0)]);
        }
    }
    for k in 0..dg {
        if space.gamma2_hi[k] > space.gamma2_lo[k] {
            lp.add_constraint(&[(g[k], 1.0), (s, -1.0)], ComparisonOp::Ge, space.gamma2_lo[k]);
            lp.add_constraint(&[(g[k], 1.0), (s, 1.0)], ComparisonOp::Le, space.gamma2_hi[k]);
        }
    }
    if let Some(rs) = restriction {
        let (r2, rhs) = rs.on_gamma2();
        for i in 0..r2.nrows() {
            let expr: Vec<_> = (0..dg).filter(|&k| r2[(i, k)] != 0.0).map(|k| (g[k], r2[(i, k)])).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, rhs[i]);
        }
    }
    let sol = lp.solve().ok()?;
    let mut gamma = Vec::with_capacity(df);
    gamma.push(1.0);
    for (k, v) in g.iter().enumerate() {
        gamma.push(sol[*v].clamp(space.gamma2_lo[k], space.gamma2_hi[k]));
    }
    if let Some(rs) = restriction {
        // Remove the simplex residual so the restriction holds to rounding.
        let (r2, rhs) = rs.on_gamma2();
        let g2 = DVector::from_column_slice(&gamma[1..]);
        let resid = &r2 * &g2 - &rhs;
        let gram = &r2 * r2.transpose();
        if let Some(w) = gram.cholesky().map(|c| c.solve(&resid)) {
            let fixed = g2 - r2.transpose() * w;
            gamma[1..].copy_from_slice(fixed.as_slice());
        }
        if let Some(fx) = rs.as_fixings() {
            for (k, v) in fx.iter().enumerate() {
                if let Some(v) = v {
                    gamma[k + 1] = *v;
                }
            }
        }
    }
    // The simplex tolerance can leave a row on the wrong side of zero.
    (regime_indicator(f, &gamma).ok()? == d).then_some(gamma)
}

/// Plug-in sandwich covariance of `α̂`, scaled by `1/T` so its diagonal gives squared standard errors.
pub fn alpha_covariance(ds: &Dataset, factors: &DMatrix<f64>, result: &EstimationResult) -> Result<DMatrix<f64>> {
    let t = ds.t();
    let d = regime_indicator(factors, &result.params.gamma)?;
    let z = build_design(&ds.x, &d)?;
    let alpha = result.params.alpha();
    if alpha.len() != z.ncols() {
        return Err(dim("parameter length does not match the design"));
    }
    let resid = &ds.y - &z * &alpha;
    let tf = t as f64;
    let bread = z.tr_mul(&z) / tf;
    let mut zw = z.clone();
    for r in 0..t {
        let e = resid[r];
        zw.row_mut(r).scale_mut(e * e);
    }
    let meat = z.tr_mul(&zw) / tf;
    let eig = bread.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(max_ev > 0.0 && min_ev > max_ev / linalg::COND_LIMIT) {
        return Err(Error::Singular("regime design has a singular moment matrix".into()));
    }
    let inv = bread.try_inverse().ok_or_else(|| Error::Singular("bread matrix".into()))?;
    let v = &inv * meat * &inv / tf;
    Ok((&v + v.transpose()) * 0.5)
}

/// Runs the chosen backend on the full search space.
pub fn estimate(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    backend: Backend,
    form: MiqpForm,
    solver: &SolverConfig,
    bcd_cfg: &BcdConfig,
) -> Result<EstimationResult> {
    match backend {
        Backend::Exact => estimate_exact(ds, factors, space),
        Backend::Miqp => estimate_miqp(ds, factors, space, form, solver),
        Backend::Bcd => bcd(ds, factors, space, bcd_cfg, solver),
        Backend::Auto => {
            if factors.ncols() <= 4 {
                estimate_exact(ds, factors, space)
            } else {
                estimate_miqp(ds, factors, space, form, solver)
            }
        }
    }
}

/// Same as [`estimate`] under a restriction on γ.
pub fn estimate_restricted(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    restriction: &Restriction,
    backend: Backend,
    form: MiqpForm,
    solver: &SolverConfig,
) -> Result<EstimationResult> {
    let sweepable = restriction.as_fixings().map(|fx| fx.iter().filter(|v| v.is_none()).count() <= 3).unwrap_or(false);
    match backend {
        Backend::Exact => estimate_exact_restricted(ds, factors, space, restriction),
        Backend::Auto if sweepable => estimate_exact_restricted(ds, factors, space, restriction),
        _ => estimate_miqp_restricted(ds, factors, space, form, solver, Some(restriction)),
    }
}
