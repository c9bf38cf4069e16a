//! Exact estimation by walking every regime pattern the index can produce.
//!
//! For each cell of the arrangement the least-squares fit splits into two
//! independent regressions, so the minimal SSR is
//! `y'y − b₀'S₀⁺b₀ − b₁'S₁⁺b₁` with `(S_r, b_r)` the regime moment sums.
//! The visitor keeps `(S₁, b₁)` current under single-row flips.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{fit_alpha_box, separating_gamma, Restriction};
use crate::error::{dim, Error, Result};
use crate::linalg;
use crate::model::{check_factors, regime_indicator, ssr, Dataset, EstimationResult, ParamVector, SearchSpace, Status};
use crate::optim::arrangement::{Arrangement, CellVisitor};

/// Quadratic form `b'S⁺b` for a small symmetric PSD block stored row-major.
/// Writes `S⁺b` into `sol` when asked.
fn quad(s: &[f64], b: &[f64], n: usize, work: &mut [f64], sol: Option<&mut [f64]>) -> f64 {
    match n {
        0 => return 0.0,
        1 if sol.is_none() => return if s[0] > 0.0 { b[0] * b[0] / s[0] } else { 0.0 },
        2 if sol.is_none() => {
            let det = s[0] * s[3] - s[1] * s[2];
            if det > 1e-11 * s[0] * s[3] && s[0] > 0.0 {
                return (s[3] * b[0] * b[0] - 2.0 * s[1] * b[0] * b[1] + s[0] * b[1] * b[1]) / det;
            }
        }
        _ => {}
    }
    work[..n * n].copy_from_slice(&s[..n * n]);
    let maxd = (0..n).map(|i| s[i * n + i]).fold(0.0_f64, f64::max);
    if maxd <= 0.0 {
        if let Some(out) = sol {
            out[..n].fill(0.0);
        }
        return 0.0;
    }
    // In-place Cholesky; bail out to the pseudo-inverse on a tiny pivot.
    let mut ok = true;
    'outer: for j in 0..n {
        let mut dj = work[j * n + j];
        for k in 0..j {
            dj -= work[j * n + k] * work[j * n + k];
        }
        if !(dj > maxd * 1e-11) {
            ok = false;
            break 'outer;
        }
        let lj = dj.sqrt();
        work[j * n + j] = lj;
        for i in (j + 1)..n {
            let mut v = work[i * n + j];
            for k in 0..j {
                v -= work[i * n + k] * work[j * n + k];
            }
            work[i * n + j] = v / lj;
        }
    }
    if ok {
        // Forward solve L z = b, then b'S⁻¹b = z'z.
        let mut z = [0.0; 16];
        let zs: &mut [f64] = if n <= 16 { &mut z[..n] } else { return quad_pinv(s, b, n, sol) };
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= work[i * n + k] * zs[k];
            }
            zs[i] = v / work[i * n + i];
        }
        let q: f64 = zs.iter().map(|v| v * v).sum();
        if let Some(out) = sol {
            for i in (0..n).rev() {
                let mut v = zs[i];
                for k in (i + 1)..n {
                    v -= work[k * n + i] * out[k];
                }
                out[i] = v / work[i * n + i];
            }
        }
        return q;
    }
    quad_pinv(s, b, n, sol)
}

fn quad_pinv(s: &[f64], b: &[f64], n: usize, sol: Option<&mut [f64]>) -> f64 {
    let g = DMatrix::from_row_slice(n, n, &s[..n * n]);
    let bv = DVector::from_column_slice(&b[..n]);
    let x = linalg::solve_psd(&g, &bv).coef;
    if let Some(out) = sol {
        out[..n].copy_from_slice(x.as_slice());
    }
    bv.dot(&x)
}

struct SsrVisitor<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    space: &'a SearchSpace,
    dx: usize,
    lo_cnt: usize,
    hi_cnt: usize,
    outer: Vec<f64>,
    xy: Vec<f64>,
    s_tot: Vec<f64>,
    b_tot: Vec<f64>,
    yy: f64,
    s1: Vec<f64>,
    b1: Vec<f64>,
    n1: usize,
    state: Vec<u8>,
    work: Vec<f64>,
    s0: Vec<f64>,
    b0: Vec<f64>,
    best: f64,
    best_d: Option<Vec<u8>>,
    best_witness: Vec<f64>,
    cells: usize,
    /// Refit inside the α box when the free fit leaves it.
    boxed: bool,
}

impl<'a> SsrVisitor<'a> {
    fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, space: &'a SearchSpace) -> Self {
        let (t, dx) = x.shape();
        let mut outer = vec![0.0; t * dx * dx];
        let mut xy = vec![0.0; t * dx];
        let mut s_tot = vec![0.0; dx * dx];
        let mut b_tot = vec![0.0; dx];
        for r in 0..t {
            for i in 0..dx {
                xy[r * dx + i] = x[(r, i)] * y[r];
                b_tot[i] += xy[r * dx + i];
                for j in 0..dx {
                    let v = x[(r, i)] * x[(r, j)];
                    outer[r * dx * dx + i * dx + j] = v;
                    s_tot[i * dx + j] += v;
                }
            }
        }
        let (lo_cnt, hi_cnt) = space.count_window(t);
        Self {
            x,
            y,
            space,
            dx,
            lo_cnt,
            hi_cnt,
            outer,
            xy,
            s_tot,
            b_tot,
            yy: y.norm_squared(),
            s1: vec![0.0; dx * dx],
            b1: vec![0.0; dx],
            n1: 0,
            state: vec![0; t],
            work: vec![0.0; dx * dx],
            s0: vec![0.0; dx * dx],
            b0: vec![0.0; dx],
            best: f64::INFINITY,
            best_d: None,
            best_witness: Vec::new(),
            cells: 0,
            boxed: true,
        }
    }

    fn add(&mut self, t: usize, sign: f64) {
        let dx = self.dx;
        let o = &self.outer[t * dx * dx..(t + 1) * dx * dx];
        for (a, b) in self.s1.iter_mut().zip(o) {
            *a += sign * b;
        }
        for i in 0..dx {
            self.b1[i] += sign * self.xy[t * dx + i];
        }
    }
}

impl CellVisitor for SsrVisitor<'_> {
    fn begin(&mut self, positive: &[bool]) {
        self.s1.fill(0.0);
        self.b1.fill(0.0);
        self.n1 = 0;
        for (t, &p) in positive.iter().enumerate() {
            self.state[t] = u8::from(p);
            if p {
                self.add(t, 1.0);
                self.n1 += 1;
            }
        }
    }

    fn flip(&mut self, t: usize, positive: bool) {
        if (self.state[t] != 0) == positive {
            return;
        }
        self.state[t] = u8::from(positive);
        if positive {
            self.add(t, 1.0);
            self.n1 += 1;
        } else {
            self.add(t, -1.0);
            self.n1 -= 1;
        }
    }

    fn cell(&mut self, witness: &dyn Fn() -> Vec<f64>) {
        self.cells += 1;
        if self.n1 < self.lo_cnt || self.n1 > self.hi_cnt {
            return;
        }
        let dx = self.dx;
        for i in 0..dx * dx {
            self.s0[i] = self.s_tot[i] - self.s1[i];
        }
        for i in 0..dx {
            self.b0[i] = self.b_tot[i] - self.b1[i];
        }
        let q1 = quad(&self.s1, &self.b1, dx, &mut self.work, None);
        let q0 = quad(&self.s0, &self.b0, dx, &mut self.work, None);
        let unc = self.yy - q0 - q1;
        let tol = 1e-12 * self.yy.max(1.0);
        if !(unc < self.best - tol) {
            return;
        }
        if !self.boxed {
            self.best = unc;
            self.best_d = Some(self.state.clone());
            return;
        }
        // The unconstrained fit may leave the α box; fall back to the box fit.
        let (_, s, _) = fit_alpha_box(self.x, self.y, &self.state, self.space);
        let val = s * self.state.len() as f64;
        if val < self.best - tol {
            self.best = val;
            self.best_d = Some(self.state.clone());
            self.best_witness = witness();
        }
    }
}

/// Minimises `Σ c_t d_t` over the cells, keeping the first minimiser met.
struct LinearVisitor<'a> {
    c: &'a [f64],
    lo_cnt: usize,
    hi_cnt: usize,
    state: Vec<u8>,
    value: f64,
    n1: usize,
    best: f64,
    best_d: Option<Vec<u8>>,
    best_witness: Vec<f64>,
}

impl CellVisitor for LinearVisitor<'_> {
    fn begin(&mut self, positive: &[bool]) {
        self.value = 0.0;
        self.n1 = 0;
        for (t, &p) in positive.iter().enumerate() {
            self.state[t] = u8::from(p);
            if p {
                self.value += self.c[t];
                self.n1 += 1;
            }
        }
    }

    fn flip(&mut self, t: usize, positive: bool) {
        if (self.state[t] != 0) == positive {
            return;
        }
        self.state[t] = u8::from(positive);
        if positive {
            self.value += self.c[t];
            self.n1 += 1;
        } else {
            self.value -= self.c[t];
            self.n1 -= 1;
        }
    }

    fn cell(&mut self, witness: &dyn Fn() -> Vec<f64>) {
        if self.n1 < self.lo_cnt || self.n1 > self.hi_cnt {
            return;
        }
        let scale: f64 = 1e-12 * self.c.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
        if self.value < self.best - scale {
            // Recompute to drop accumulated rounding.
            self.best = self.state.iter().zip(self.c).filter(|(d, _)| **d != 0).map(|(_, c)| c).sum();
            self.best_d = Some(self.state.clone());
            self.best_witness = witness();
        }
    }
}

fn arrangement_for(f: &DMatrix<f64>, space: &SearchSpace, restriction: Option<&Restriction>) -> Result<Arrangement> {
    let fixed = match restriction {
        None => vec![None; f.ncols() - 1],
        Some(r) => r
            .as_fixings()
            .ok_or_else(|| Error::Unsupported("exact enumeration handles only coordinate restrictions on γ".into()))?,
    };
    for (k, v) in fixed.iter().enumerate() {
        if let Some(v) = v {
            if *v < space.gamma2_lo[k] || *v > space.gamma2_hi[k] {
                return Err(Error::Infeasible(format!("restricted coefficient {k} lies outside the γ box")));
            }
        }
    }
    Arrangement::with_fixed(f, &space.gamma2_lo, &space.gamma2_hi, &fixed)
}

/// The witness from the sweep, replaced by a max-margin point when one exists.
fn finish_gamma(f: &DMatrix<f64>, d: &[u8], space: &SearchSpace, restriction: Option<&Restriction>, witness: &[f64]) -> Vec<f64> {
    if let Some(g) = separating_gamma(f, d, space, space.eps_strict, restriction) {
        return g;
    }
    let mut g = vec![1.0];
    g.extend_from_slice(witness);
    g
}

pub fn estimate_exact(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace) -> Result<EstimationResult> {
    exact_impl(ds, factors, space, None)
}

/// Exact estimation under a restriction that pins some γ₂ coordinates.
pub fn estimate_exact_restricted(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace, restriction: &Restriction) -> Result<EstimationResult> {
    exact_impl(ds, factors, space, Some(restriction))
}

fn exact_impl(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace, restriction: Option<&Restriction>) -> Result<EstimationResult> {
    let start = Instant::now();
    ds.validate()?;
    space.validate()?;
    check_factors(factors, ds.t())?;
    if space.dx() != ds.dx() || space.gamma2_lo.len() + 1 != factors.ncols() {
        return Err(dim("search space does not match the data dimensions"));
    }
    let arr = arrangement_for(factors, space, restriction)?;
    let mut vis = SsrVisitor::new(&ds.x, &ds.y, space);
    arr.sweep(&mut vis);
    let d = vis.best_d.take().ok_or_else(|| Error::Infeasible("no regime pattern satisfies the share bounds".into()))?;
    let gamma = finish_gamma(factors, &d, space, restriction, &vis.best_witness);
    let d_final = regime_indicator(factors, &gamma)?;
    let (alpha, _, degenerate) = fit_alpha_box(&ds.x, &ds.y, &d_final, space);
    let params = ParamVector::from_alpha(&alpha, gamma)?;
    let objective = ssr(ds, &params, factors)?;
    Ok(EstimationResult {
        params,
        objective,
        d: d_final,
        gap: 0.0,
        status: Status::Optimal,
        wall_time: start.elapsed().as_secs_f64(),
        trace: vec![objective],
        degenerate,
        nodes_explored: vis.cells,
    })
}

/// Smallest unrestricted-α SSR (a sum, not a mean) over every regime
/// pattern allowed by the share window.
pub(crate) fn min_free_ssr(x: &DMatrix<f64>, y: &DVector<f64>, factors: &DMatrix<f64>, space: &SearchSpace) -> Result<f64> {
    let arr = arrangement_for(factors, space, None)?;
    let mut vis = SsrVisitor::new(x, y, space);
    vis.boxed = false;
    arr.sweep(&mut vis);
    if vis.best_d.is_none() {
        return Err(Error::Infeasible("no regime pattern satisfies the share bounds".into()));
    }
    Ok(vis.best.max(0.0))
}

/// Exact solution of `min Σ c_t 1{f_t'γ > 0}` over the γ box and the share
/// window. Returns `(γ, d, Σ c_t d_t)`.
pub fn milp_exact(
    factors: &DMatrix<f64>,
    c: &[f64],
    space: &SearchSpace,
    restriction: Option<&Restriction>,
) -> Result<(Vec<f64>, Vec<u8>, f64)> {
    let t = factors.nrows();
    if c.len() != t {
        return Err(dim("cost vector length differs from the sample size"));
    }
    let arr = arrangement_for(factors, space, restriction)?;
    let (lo_cnt, hi_cnt) = space.count_window(t);
    let mut vis = LinearVisitor {
        c,
        lo_cnt,
        hi_cnt,
        state: vec![0; t],
        value: 0.0,
        n1: 0,
        best: f64::INFINITY,
        best_d: None,
        best_witness: Vec::new(),
    };
    arr.sweep(&mut vis);
    let d = vis.best_d.take().ok_or_else(|| Error::Infeasible("no regime pattern satisfies the share bounds".into()))?;
    let gamma = finish_gamma(factors, &d, space, restriction, &vis.best_witness);
    let d = regime_indicator(factors, &gamma)?;
    let value = d.iter().zip(c).filter(|(v, _)| **v != 0).map(|(_, c)| c).sum();
    Ok((gamma, d, value))
}
