//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition threshold below which a Gram matrix is treated as singular.
pub const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct LsSolution {
    pub coef: DVector<f64>,
    /// True when the Gram matrix was rank deficient and a minimum-norm solution was used.
    pub rank_deficient: bool,
}

/// Solves `G x = b` for a symmetric positive semi-definite `G`.
///
/// Uses Cholesky when `G` is well conditioned and falls back to the
/// eigen-based pseudo-inverse otherwise.
pub fn solve_psd(g: &DMatrix<f64>, b: &DVector<f64>) -> LsSolution {
    let n = g.nrows();
    if n == 0 {
        return LsSolution { coef: DVector::zeros(0), rank_deficient: false };
    }
    let eig = g.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_ev > 0.0 && min_ev > max_ev / COND_LIMIT {
        if let Some(ch) = g.clone().cholesky() {
            return LsSolution { coef: ch.solve(b), rank_deficient: false };
        }
    }
    let cut = max_ev.max(0.0) / COND_LIMIT;
    let mut coef = DVector::zeros(n);
    for k in 0..n {
        let ev = eig.eigenvalues[k];
        if ev > cut && ev > 0.0 {
            let v = eig.eigenvectors.column(k);
            let w = v.dot(b) / ev;
            coef.axpy(w, &v.into_owned(), 1.0);
        }
    }
    LsSolution { coef, rank_deficient: true }
}

/// Minimises `½ x'Gx − b'x` over the box `lo ≤ x ≤ hi` (active-set method).
pub fn box_qp(g: &DMatrix<f64>, b: &DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    let n = g.nrows();
    // Start from the projected unconstrained solution.
    let free = solve_psd(g, b).coef;
    let mut x = DVector::from_iterator(n, (0..n).map(|j| free[j].clamp(lo[j], hi[j])));
    let mut active: Vec<bool> = (0..n).map(|j| x[j] <= lo[j] || x[j] >= hi[j]).collect();
    for _outer in 0..(4 * n + 20) {
        // Solve on the free set with the active variables pinned.
        loop {
            let fidx: Vec<usize> = (0..n).filter(|&j| !active[j]).collect();
            if fidx.is_empty() {
                break;
            }
            let mut gff = DMatrix::zeros(fidx.len(), fidx.len());
            let mut rhs = DVector::zeros(fidx.len());
            for (a, &i) in fidx.iter().enumerate() {
                let mut r = b[i];
                for j in 0..n {
                    if active[j] {
                        r -= g[(i, j)] * x[j];
                    }
                }
                rhs[a] = r;
                for (c, &j) in fidx.iter().enumerate() {
                    gff[(a, c)] = g[(i, j)];
                }
            }
            let sol = solve_psd(&gff, &rhs).coef;
            // Step from the current point towards the free-set solution.
            let mut step = 1.0_f64;
            let mut hit = None;
            for (a, &j) in fidx.iter().enumerate() {
                let dx = sol[a] - x[j];
                if dx > 0.0 && x[j] + dx > hi[j] {
                    let s = (hi[j] - x[j]) / dx;
                    if s < step {
                        step = s;
                        hit = Some(j);
                    }
                } else if dx < 0.0 && x[j] + dx < lo[j] {
                    let s = (lo[j] - x[j]) / dx;
                    if s < step {
                        step = s;
                        hit = Some(j);
                    }
                }
            }
            for (a, &j) in fidx.iter().enumerate() {
                x[j] += step * (sol[a] - x[j]);
            }
            match hit {
                Some(j) => {
                    x[j] = if x[j] - lo[j] < hi[j] - x[j] { lo[j] } else { hi[j] };
                    active[j] = true;
                }
                None => break,
            }
        }
        // Release the active variable with the most negative multiplier.
        let grad = g * &x - b;
        let mut release = None;
        let mut worst = 0.0;
        for j in 0..n {
            if !active[j] {
                continue;
            }
            let score = if (x[j] - lo[j]).abs() <= (hi[j] - x[j]).abs() { -grad[j] } else { grad[j] };
            if score > worst + 1e-13 * (1.0 + b.amax()) && lo[j] < hi[j] {
                worst = score;
                release = Some(j);
            }
        }
        match release {
            Some(j) => active[j] = false,
            None => break,
        }
    }
    x
}

/// Symmetric square root `R` with `R R' = S`, clipping negative eigenvalues at zero.
pub fn psd_sqrt(s: &DMatrix<f64>, sym_tol: f64) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::Dimension(format!("square matrix expected, got {}x{}", n, s.ncols())));
    }
    let scale = s.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (s[(i, j)] - s[(j, i)]).abs() > sym_tol * scale {
                return Err(Error::Invalid(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    s[(i, j)],
                    s[(j, i)]
                )));
            }
        }
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut v = eig.eigenvectors.clone();
    for k in 0..n {
        let r = eig.eigenvalues[k].max(0.0).sqrt();
        v.column_mut(k).scale_mut(r);
    }
    Ok(&v * eig.eigenvectors.transpose())
}

/// Dense `X' X` for a row-major view given as nalgebra matrix.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.tr_mul(x)
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
