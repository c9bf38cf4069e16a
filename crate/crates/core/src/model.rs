//! Domain types for the two-regime model and the least-squares criterion.
//!
//! The model is `y_t = x_t'β + x_t'δ·1{f_t'γ > 0} + ε_t` with the intercept
//! stored as the first column of `X`, the constant `−1` stored as the last
//! column of the factor matrix and the scale normalisation `γ₁ = 1`.
//! Observations with `f_t'γ = 0` are assigned regime 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Error, Result};
use crate::linalg;

/// Outcome, regressors and either observed factors or a panel for PCA.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub factors: Option<DMatrix<f64>>,
    pub panel: Option<DMatrix<f64>>,
}

impl Dataset {
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        factors: Option<DMatrix<f64>>,
        panel: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let ds = Self { y, x, factors, panel };
        ds.validate()?;
        Ok(ds)
    }

    pub fn t(&self) -> usize {
        self.y.len()
    }

    pub fn dx(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.y.len();
        if t < 2 {
            return Err(invalid(format!("need at least 2 observations, got {t}")));
        }
        if self.x.nrows() != t {
            return Err(dim(format!("X has {} rows, y has {t}", self.x.nrows())));
        }
        if self.x.ncols() == 0 {
            return Err(dim("X has no columns"));
        }
        if !self.y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("y"));
        }
        if !linalg::all_finite(&self.x) {
            return Err(Error::NonFinite("X"));
        }
        if self.x.column(0).iter().any(|&v| v != 1.0) {
            return Err(invalid("first column of X must be the constant 1"));
        }
        if self.factors.is_none() && self.panel.is_none() {
            return Err(invalid("either observed factors or a panel must be supplied"));
        }
        if let Some(f) = &self.factors {
            check_factors(f, t)?;
        }
        if let Some(p) = &self.panel {
            if p.nrows() != t {
                return Err(dim(format!("panel has {} rows, y has {t}", p.nrows())));
            }
            if !linalg::all_finite(p) {
                return Err(Error::NonFinite("panel"));
            }
        }
        Ok(())
    }

    /// Same regressors and factors with a different outcome vector.
    pub fn with_y(&self, y: DVector<f64>) -> Self {
        Self { y, x: self.x.clone(), factors: self.factors.clone(), panel: self.panel.clone() }
    }

    pub fn observed_factors(&self) -> Result<&DMatrix<f64>> {
        self.factors.as_ref().ok_or_else(|| invalid("dataset carries no observed factors"))
    }
}

/// Checks a factor matrix: `t` rows, finite, at least one column and `−1` in the last column.
pub fn check_factors(f: &DMatrix<f64>, t: usize) -> Result<()> {
    if f.nrows() != t {
        return Err(dim(format!("factor matrix has {} rows, expected {t}", f.nrows())));
    }
    if f.ncols() < 2 {
        return Err(dim("factor matrix needs at least one factor plus the constant column"));
    }
    if !linalg::all_finite(f) {
        return Err(Error::NonFinite("factors"));
    }
    if f.column(f.ncols() - 1).iter().any(|&v| v != -1.0) {
        return Err(invalid("last column of the factor matrix must be the constant -1"));
    }
    Ok(())
}

/// Appends the constant `−1` column to a `T×K` factor block.
pub fn with_constant(f1: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, k) = f1.shape();
    let mut out = DMatrix::from_element(t, k + 1, -1.0);
    out.view_mut((0, 0), (t, k)).copy_from(f1);
    out
}

/// `(β, δ, γ)` with `γ₁ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ParamVector {
    pub fn new(beta: Vec<f64>, delta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if beta.len() != delta.len() {
            return Err(dim(format!("beta has {} entries, delta {}", beta.len(), delta.len())));
        }
        if gamma.first() != Some(&1.0) {
            return Err(invalid("gamma must be normalised so that its first entry is exactly 1"));
        }
        Ok(Self { beta, delta, gamma })
    }

    pub fn alpha(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.beta.len() * 2,
            self.beta.iter().chain(self.delta.iter()).cloned(),
        )
    }

    pub fn from_alpha(alpha: &DVector<f64>, gamma: Vec<f64>) -> Result<Self> {
        let dx = alpha.len() / 2;
        Self::new(alpha.rows(0, dx).iter().cloned().collect(), alpha.rows(dx, dx).iter().cloned().collect(), gamma)
    }
}

/// Parameter space for `(α, γ)` and the regime-share trimming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub alpha_lo: Vec<f64>,
    pub alpha_hi: Vec<f64>,
    pub gamma2_lo: Vec<f64>,
    pub gamma2_hi: Vec<f64>,
    pub tau1: f64,
    pub tau2: f64,
    pub eps_strict: f64,
}

pub const DEFAULT_TAU1: f64 = 0.05;
pub const DEFAULT_TAU2: f64 = 0.95;
pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_GAMMA_BOUND: f64 = 5.0;

impl SearchSpace {
    pub fn new(
        alpha_lo: Vec<f64>,
        alpha_hi: Vec<f64>,
        gamma2_lo: Vec<f64>,
        gamma2_hi: Vec<f64>,
        tau1: f64,
        tau2: f64,
        eps_strict: f64,
    ) -> Result<Self> {
        let s = Self { alpha_lo, alpha_hi, gamma2_lo, gamma2_hi, tau1, tau2, eps_strict };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_lo.len() != self.alpha_hi.len() || self.alpha_lo.len() % 2 != 0 {
            return Err(dim("alpha box must have matching even-length bounds"));
        }
        if self.gamma2_lo.len() != self.gamma2_hi.len() {
            return Err(dim("gamma box bounds differ in length"));
        }
        if self.alpha_lo.iter().zip(&self.alpha_hi).any(|(l, h)| !(l < h)) {
            return Err(invalid("alpha box needs lo < hi in every coordinate"));
        }
        if self.gamma2_lo.iter().zip(&self.gamma2_hi).any(|(l, h)| !(l <= h)) {
            return Err(invalid("gamma box needs lo <= hi in every coordinate"));
        }
        if !(0.0 < self.tau1 && self.tau1 < self.tau2 && self.tau2 < 1.0) {
            return Err(invalid(format!("need 0 < tau1 < tau2 < 1, got {} and {}", self.tau1, self.tau2)));
        }
        if !(self.eps_strict > 0.0) {
            return Err(invalid("eps_strict must be positive"));
        }
        Ok(())
    }

    /// Default space: α box `±(10·‖β̂_OLS‖∞ + 1)`, γ box `[−5, 5]`, τ = (0.05, 0.95), ε = 1e−6.
    pub fn default_for(ds: &Dataset, df: usize) -> Result<Self> {
        let fit = ols(&ds.x, &ds.y);
        let mag = fit.coef.amax();
        let b = 10.0 * mag + 1.0;
        let dx = ds.dx();
        Self::new(
            vec![-b; 2 * dx],
            vec![b; 2 * dx],
            vec![-DEFAULT_GAMMA_BOUND; df - 1],
            vec![DEFAULT_GAMMA_BOUND; df - 1],
            DEFAULT_TAU1,
            DEFAULT_TAU2,
            DEFAULT_EPS,
        )
    }

    pub fn dx(&self) -> usize {
        self.alpha_lo.len() / 2
    }

    /// Bounds `(L_j, U_j)` on the threshold effect δ.
    pub fn delta_bounds(&self) -> (&[f64], &[f64]) {
        let dx = self.dx();
        (&self.alpha_lo[dx..], &self.alpha_hi[dx..])
    }

    /// Smallest and largest admissible regime-1 count for a sample of size `t`.
    pub fn count_window(&self, t: usize) -> (usize, usize) {
        let tf = t as f64;
        let lo = (self.tau1 * tf - 1e-9).ceil().max(0.0) as usize;
        let hi = (self.tau2 * tf + 1e-9).floor() as usize;
        (lo, hi.min(t))
    }

    pub fn share_ok(&self, count: usize, t: usize) -> bool {
        let (lo, hi) = self.count_window(t);
        count >= lo && count <= hi
    }

    pub fn alpha_in_box(&self, alpha: &DVector<f64>) -> bool {
        alpha.iter().enumerate().all(|(j, &a)| a >= self.alpha_lo[j] && a <= self.alpha_hi[j])
    }

    /// Copy of the space with the γ box dropped to the given coordinates (0-based among γ₂).
    pub fn restrict_gamma(&self, keep: &[usize]) -> Self {
        let mut s = self.clone();
        s.gamma2_lo = keep.iter().map(|&k| self.gamma2_lo[k]).collect();
        s.gamma2_hi = keep.iter().map(|&k| self.gamma2_hi[k]).collect();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    TimeLimit,
    Infeasible,
}

/// Point estimate with solver diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub params: ParamVector,
    pub objective: f64,
    pub d: Vec<u8>,
    pub gap: f64,
    pub status: Status,
    pub wall_time: f64,
    /// Objective after each outer step (single entry for one-shot solvers).
    #[serde(default)]
    pub trace: Vec<f64>,
    /// Set when the final least-squares step hit a rank-deficient design.
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default)]
    pub nodes_explored: usize,
}

impl EstimationResult {
    pub fn regime_share(&self) -> f64 {
        self.d.iter().map(|&v| v as f64).sum::<f64>() / self.d.len().max(1) as f64
    }
}

/// `d_t = 1{f_t'γ > 0}`.
pub fn regime_indicator(factors: &DMatrix<f64>, gamma: &[f64]) -> Result<Vec<u8>> {
    if factors.ncols() != gamma.len() {
        return Err(dim(format!("factors have {} columns, gamma has {} entries", factors.ncols(), gamma.len())));
    }
    if gamma.first() != Some(&1.0) {
        return Err(invalid("gamma must have first entry 1"));
    }
    Ok(index_values(factors, gamma).iter().map(|&v| u8::from(v > 0.0)).collect())
}

/// `f_t'γ` for every row.
pub fn index_values(factors: &DMatrix<f64>, gamma: &[f64]) -> Vec<f64> {
    (0..factors.nrows())
        .map(|t| (0..gamma.len()).map(|k| factors[(t, k)] * gamma[k]).sum())
        .collect()
}

/// Rows `(x_t', x_t'·d_t)`.
pub fn build_design(x: &DMatrix<f64>, d: &[u8]) -> Result<DMatrix<f64>> {
    let (t, dx) = x.shape();
    if d.len() != t {
        return Err(dim(format!("d has {} entries, X has {t} rows", d.len())));
    }
    let mut z = DMatrix::zeros(t, 2 * dx);
    z.view_mut((0, 0), (t, dx)).copy_from(x);
    for (r, &dt) in d.iter().enumerate() {
        if dt != 0 {
            for j in 0..dx {
                z[(r, dx + j)] = x[(r, j)];
            }
        }
    }
    Ok(z)
}

/// `S_T(α, γ) = (1/T) Σ (y_t − x_t'β − x_t'δ·1{f_t'γ > 0})²`.
pub fn ssr(ds: &Dataset, p: &ParamVector, factors: &DMatrix<f64>) -> Result<f64> {
    let t = ds.t();
    let dx = ds.dx();
    if p.beta.len() != dx {
        return Err(dim(format!("beta has {} entries, X has {dx} columns", p.beta.len())));
    }
    if factors.nrows() != t {
        return Err(dim(format!("factor matrix has {} rows, expected {t}", factors.nrows())));
    }
    if !p.beta.iter().chain(&p.delta).chain(&p.gamma).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("parameters"));
    }
    let d = regime_indicator(factors, &p.gamma)?;
    Ok(ssr_given_d(&ds.x, &ds.y, &p.beta, &p.delta, &d))
}

pub(crate) fn ssr_given_d(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], delta: &[f64], d: &[u8]) -> f64 {
    let (t, dx) = x.shape();
    let mut acc = 0.0;
    for r in 0..t {
        let mut fit = 0.0;
        for j in 0..dx {
            fit += x[(r, j)] * beta[j];
            if d[r] != 0 {
                fit += x[(r, j)] * delta[j];
            }
        }
        let e = y[r] - fit;
        acc += e * e;
    }
    acc / t as f64
}

/// Ordinary least squares of `y` on `x`.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> linalg::LsSolution {
    let g = x.tr_mul(x);
    let b = x.tr_mul(y);
    linalg::solve_psd(&g, &b)
}
