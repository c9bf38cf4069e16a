//! Principal-component factors for a `T×N` panel.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim, invalid, Error, Result};
use crate::linalg;
use crate::model::with_constant;

/// Output of [`estimate_factors`].
#[derive(Debug, Clone)]
pub struct FactorEstimate {
    /// `T×K`, normalised so that `F1'F1/T = I`.
    pub f1: DMatrix<f64>,
    /// `f1` with the constant `−1` column appended.
    pub f_full: DMatrix<f64>,
    /// `N×K` loadings `Y'F1/T`.
    pub lambda: DMatrix<f64>,
    /// Top-K eigenvalues of `YY'/(NT)`, non-increasing.
    pub v: DVector<f64>,
    /// Residual panel `Y − F1·Λ'`.
    pub e: DMatrix<f64>,
    pub k: usize,
}

/// Block-diagonal rotation `diag(H̃, 1)` linking estimated and true factors.
#[derive(Debug, Clone)]
pub struct RotationMatrix {
    pub h: DMatrix<f64>,
}

impl RotationMatrix {
    pub fn inner(&self) -> DMatrix<f64> {
        let k = self.h.nrows() - 1;
        self.h.view((0, 0), (k, k)).into_owned()
    }
}

pub fn estimate_factors(panel: &DMatrix<f64>, k: usize) -> Result<FactorEstimate> {
    let (t, n) = panel.shape();
    if k == 0 || k > t.min(n) {
        return Err(invalid(format!("factor count {k} outside 1..={}", t.min(n))));
    }
    if !linalg::all_finite(panel) {
        return Err(Error::NonFinite("panel"));
    }
    let scale = 1.0 / (n as f64 * t as f64);
    let yy = (panel * panel.transpose()) * scale;
    let eig = yy.symmetric_eigen();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut f1 = DMatrix::zeros(t, k);
    let mut v = DVector::zeros(k);
    let root_t = (t as f64).sqrt();
    for (c, &idx) in order.iter().take(k).enumerate() {
        v[c] = eig.eigenvalues[idx];
        if !(v[c] > 0.0) {
            return Err(Error::Singular(format!("eigenvalue {c} of the panel is not positive")));
        }
        let mut col = eig.eigenvectors.column(idx).into_owned();
        let norm = col.norm();
        col /= norm;
        fix_sign(&mut col);
        f1.set_column(c, &(col * root_t));
    }
    let lambda = panel.transpose() * &f1 / t as f64;
    let e = panel - &f1 * lambda.transpose();
    let f_full = with_constant(&f1);
    Ok(FactorEstimate { f1, f_full, lambda, v, e, k })
}

/// Makes the first entry of non-negligible magnitude positive.
fn fix_sign(col: &mut DVector<f64>) {
    let tol = 1e-10 * col.amax();
    if let Some(first) = col.iter().find(|v| v.abs() > tol) {
        if *first < 0.0 {
            col.neg_mut();
        }
    }
}

/// `H̃' = V⁻¹ · (1/T) Σ F1_t g_t' · (Λ'Λ/N)` with the true loadings.
pub fn rotation_matrix(fe: &FactorEstimate, g_true: &DMatrix<f64>, lambda_true: &DMatrix<f64>) -> Result<RotationMatrix> {
    let (t, k) = fe.f1.shape();
    if g_true.shape() != (t, k) {
        return Err(dim(format!("true factors are {}x{}, expected {t}x{k}", g_true.nrows(), g_true.ncols())));
    }
    if lambda_true.ncols() != k {
        return Err(dim("true loadings have the wrong number of columns"));
    }
    if fe.v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Singular("eigenvalue matrix".into()));
    }
    let n = lambda_true.nrows() as f64;
    let cross = fe.f1.tr_mul(g_true) / t as f64;
    let sl = lambda_true.tr_mul(lambda_true) / n;
    let mut ht_t = cross * sl;
    for r in 0..k {
        let inv = 1.0 / fe.v[r];
        ht_t.row_mut(r).scale_mut(inv);
    }
    let ht = ht_t.transpose();
    if ht.clone().try_inverse().is_none() {
        return Err(Error::Singular("rotation matrix".into()));
    }
    let mut h = DMatrix::zeros(k + 1, k + 1);
    h.view_mut((0, 0), (k, k)).copy_from(&ht);
    h[(k, k)] = 1.0;
    Ok(RotationMatrix { h })
}

/// Residual covariance with adaptive soft thresholding of the off-diagonal entries.
pub fn threshold_covariance(e: &DMatrix<f64>, c_thresh: f64) -> Result<DMatrix<f64>> {
    let (t, n) = e.shape();
    if t < 2 {
        return Err(invalid("threshold covariance needs at least 2 observations"));
    }
    let means = DVector::from_iterator(n, e.column_iter().map(|c| c.mean()));
    let mut centred = e.clone();
    for j in 0..n {
        let m = means[j];
        centred.column_mut(j).add_scalar_mut(-m);
    }
    let mut s = centred.tr_mul(&centred) / t as f64;
    let level = c_thresh * ((n as f64).ln().max(0.0) / t as f64).sqrt();
    for i in 0..n {
        for j in (i + 1)..n {
            let cut = if c_thresh.is_infinite() { f64::INFINITY } else { level * (s[(i, i)] * s[(j, j)]).sqrt() };
            let v = s[(i, j)];
            let shrunk = if v.abs() > cut { v.signum() * (v.abs() - cut) } else { 0.0 };
            s[(i, j)] = shrunk;
            s[(j, i)] = shrunk;
        }
    }
    Ok(eigen_floor(s))
}

/// Lifts eigenvalues below a small floor, leaving the matrix untouched when none are.
fn eigen_floor(s: DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    if n == 0 {
        return s;
    }
    let floor = 1e-10 * s.diagonal().amax().max(f64::MIN_POSITIVE);
    // Diagonal matrices need no decomposition.
    let off_diag_zero = (0..n).all(|i| (0..n).all(|j| i == j || s[(i, j)] == 0.0));
    if off_diag_zero {
        let mut out = s;
        for i in 0..n {
            out[(i, i)] = out[(i, i)].max(floor);
        }
        return out;
    }
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= floor {
        return s;
    }
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Symmetric PSD square root `R` with `RR' = S`.
pub fn matrix_sqrt_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::psd_sqrt(s, 1e-8)
}

/// `N(Λ'Λ)⁻¹ Λ'ΣΛ (Λ'Λ)⁻¹`, the asymptotic covariance of the estimated factor rows.
pub fn factor_noise_covariance(lambda: &DMatrix<f64>, sigma_e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = lambda.nrows();
    if sigma_e.shape() != (n, n) {
        return Err(dim("residual covariance does not match the loadings"));
    }
    let ll_inv = lambda
        .tr_mul(lambda)
        .try_inverse()
        .ok_or_else(|| Error::Singular("loading Gram matrix".into()))?;
    let mid = lambda.transpose() * sigma_e * lambda;
    let out = &ll_inv * mid * &ll_inv * n as f64;
    Ok((&out + out.transpose()) * 0.5)
}
