//! Operator-splitting solver for convex QPs
//! `min ½x'Px + q'x  s.t.  l ≤ Ax ≤ u` (variable bounds are appended to `A`
//! as identity rows).
//!
//! The iteration is the OSQP scheme: one quasi-definite KKT solve per step,
//! relaxation, projection onto the box `[l, u]`, Ruiz equilibration, adaptive
//! step size and an active-set polish at the end.

use std::time::Instant;

use super::problem::MioProblem;
use super::sparse::{Csc, Ldl};
use crate::error::Result;

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const EQ_TOL: f64 = 1e-6;
const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

#[derive(Debug, Clone, Copy)]
pub struct AdmmSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_inf: f64,
    pub max_iter: usize,
    pub scaling_iter: usize,
    pub adapt_interval: usize,
    pub check_interval: usize,
    pub polish: bool,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            eps_inf: 1e-6,
            max_iter: 20_000,
            scaling_iter: 10,
            adapt_interval: 50,
            check_interval: 5,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxStatus {
    Solved,
    MaxIter,
    TimeLimit,
    PrimalInfeasible,
    DualInfeasible,
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub x: Vec<f64>,
    /// Multipliers for the general rows followed by the variable-bound rows.
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: RelaxStatus,
    pub iterations: usize,
    pub prim_res: f64,
    pub dual_res: f64,
    pub polished: bool,
}

/// Cached scaling, KKT pattern and factorisation for one constraint matrix.
pub struct AdmmSolver {
    n: usize,
    mt: usize,
    settings: AdmmSettings,
    // Scaled data.
    p: Csc,
    q: Vec<f64>,
    a: Csc,
    at: Csc,
    d: Vec<f64>,
    e: Vec<f64>,
    cost: f64,
    // Unscaled data for bounds and objectives.
    p0: Csc,
    q0: Vec<f64>,
    a0: Csc,
    offset: f64,
    kkt: Csc,
    rho_slots: Vec<usize>,
    ldl: Ldl,
    rho: f64,
    rho_vec: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

/// `[A; I]` for a problem with `n` variables.
fn stack_identity(a: &Csc) -> Csc {
    let m = a.nrows;
    let mut t = a.triplets();
    for j in 0..a.ncols {
        t.push((m + j, j, 1.0));
    }
    Csc::from_triplets(m + a.ncols, a.ncols, &t)
}

fn transpose(a: &Csc) -> Csc {
    let t: Vec<_> = a.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
    Csc::from_triplets(a.ncols, a.nrows, &t)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn clamp_scale(v: f64) -> f64 {
    if v < MIN_SCALE {
        1.0
    } else {
        v.min(MAX_SCALE)
    }
}

/// Column infinity norms of the symmetric matrix stored as an upper triangle.
fn sym_col_norms(p: &Csc) -> Vec<f64> {
    let mut out = vec![0.0_f64; p.ncols];
    for (r, c, v) in p.triplets() {
        out[c] = out[c].max(v.abs());
        out[r] = out[r].max(v.abs());
    }
    out
}

impl AdmmSolver {
    pub fn new(problem: &MioProblem, settings: AdmmSettings) -> Result<Self> {
        let n = problem.n();
        let a0 = stack_identity(&problem.a);
        let mt = a0.nrows;
        let p0 = problem.q.clone();
        let q0 = problem.c.clone();
        let mut p = p0.clone();
        let mut a = a0.clone();
        let mut q = q0.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; mt];
        let mut cost = 1.0;
        for _ in 0..settings.scaling_iter {
            let pn = sym_col_norms(&p);
            let an = a.col_inf_norms();
            let rn = a.row_inf_norms();
            let dx: Vec<f64> = (0..n).map(|j| 1.0 / clamp_scale(pn[j].max(an[j])).sqrt()).collect();
            let dz: Vec<f64> = (0..mt).map(|i| 1.0 / clamp_scale(rn[i]).sqrt()).collect();
            p.scale(&dx, &dx);
            a.scale(&dz, &dx);
            for j in 0..n {
                q[j] *= dx[j];
                d[j] *= dx[j];
            }
            for i in 0..mt {
                e[i] *= dz[i];
            }
            let pn = sym_col_norms(&p);
            let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let g = 1.0 / clamp_scale(mean.max(inf_norm(&q)));
            for v in p.nzval.iter_mut() {
                *v *= g;
            }
            for v in q.iter_mut() {
                *v *= g;
            }
            cost *= g;
        }
        let at = transpose(&a);
        // KKT upper triangle: [P + σI, A'; A, −diag(1/ρ)].
        let mut trip = Vec::with_capacity(p.nnz() + n + a.nnz() + mt);
        for (r, c, v) in p.triplets() {
            trip.push((r, c, v));
        }
        for j in 0..n {
            trip.push((j, j, settings.sigma));
        }
        for (r, c, v) in a.triplets() {
            trip.push((c, n + r, v));
        }
        let rho = settings.rho;
        let rho_vec = vec![rho; mt];
        for i in 0..mt {
            trip.push((n + i, n + i, -1.0 / rho));
        }
        let kkt = Csc::from_triplets(n + mt, n + mt, &trip);
        let mut rho_slots = vec![0usize; mt];
        for i in 0..mt {
            let col = n + i;
            let range = kkt.colptr[col]..kkt.colptr[col + 1];
            let k = range.clone().rev().find(|&k| kkt.rowval[k] == col).expect("diagonal present");
            rho_slots[i] = k;
        }
        let ldl = Ldl::new(&kkt)?;
        Ok(Self {
            n,
            mt,
            settings,
            p,
            q,
            a,
            at,
            d,
            e,
            cost,
            p0,
            q0,
            a0,
            offset: problem.offset,
            kkt,
            rho_slots,
            ldl,
            rho,
            rho_vec,
            x: vec![0.0; n],
            z: vec![0.0; mt],
            y: vec![0.0; mt],
        })
    }

    pub fn settings_mut(&mut self) -> &mut AdmmSettings {
        &mut self.settings
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stacked bounds `[b_lo; x_lo]` and `[b_hi; x_hi]`.
    pub fn stacked_bounds(problem: &MioProblem, x_lo: &[f64], x_hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut l = problem.b_lo.clone();
        l.extend_from_slice(x_lo);
        let mut u = problem.b_hi.clone();
        u.extend_from_slice(x_hi);
        (l, u)
    }

    fn set_rho(&mut self, rho: f64, ls: &[f64], us: &[f64]) -> Result<()> {
        self.rho = rho.clamp(RHO_MIN, RHO_MAX);
        let mut changed = false;
        for i in 0..self.mt {
            let r = if ls[i] == f64::NEG_INFINITY && us[i] == f64::INFINITY {
                RHO_MIN
            } else if us[i] - ls[i] < EQ_TOL {
                (self.rho * RHO_EQ_SCALE).min(RHO_MAX)
            } else {
                self.rho
            };
            if r != self.rho_vec[i] {
                changed = true;
                self.rho_vec[i] = r;
            }
            self.kkt.nzval[self.rho_slots[i]] = -1.0 / self.rho_vec[i];
        }
        if changed {
            self.ldl.refactor(&self.kkt.nzval)?;
        }
        Ok(())
    }

    /// Solves with the given stacked bounds. `warm` keeps the previous iterates.
    pub fn solve(&mut self, l: &[f64], u: &[f64], warm: bool, deadline: Option<Instant>) -> Result<Relaxation> {
        let (n, mt) = (self.n, self.mt);
        let s = self.settings;
        let ls: Vec<f64> = (0..mt).map(|i| l[i] * self.e[i]).collect();
        let us: Vec<f64> = (0..mt).map(|i| u[i] * self.e[i]).collect();
        if !warm {
            self.x.iter_mut().for_each(|v| *v = 0.0);
            self.z.iter_mut().for_each(|v| *v = 0.0);
            self.y.iter_mut().for_each(|v| *v = 0.0);
        }
        for i in 0..mt {
            self.z[i] = self.z[i].clamp(ls[i], us[i]);
        }
        self.set_rho(self.rho, &ls, &us)?;

        let mut rhs = vec![0.0; n + mt];
        let mut x_prev = self.x.clone();
        let mut y_prev = self.y.clone();
        let mut z_tilde = vec![0.0; mt];
        let mut ax = vec![0.0; mt];
        let mut px = vec![0.0; n];
        let mut aty = vec![0.0; n];
        let mut status = RelaxStatus::MaxIter;
        let mut iter = 0;
        let mut prim_res = f64::INFINITY;
        let mut dual_res = f64::INFINITY;
        while iter < s.max_iter {
            iter += 1;
            x_prev.copy_from_slice(&self.x);
            y_prev.copy_from_slice(&self.y);
            for j in 0..n {
                rhs[j] = s.sigma * self.x[j] - self.q[j];
            }
            for i in 0..mt {
                rhs[n + i] = self.z[i] - self.y[i] / self.rho_vec[i];
            }
            self.ldl.solve(&mut rhs);
            for i in 0..mt {
                z_tilde[i] = self.z[i] + (rhs[n + i] - self.y[i]) / self.rho_vec[i];
            }
            for j in 0..n {
                self.x[j] = s.alpha * rhs[j] + (1.0 - s.alpha) * self.x[j];
            }
            for i in 0..mt {
                let relaxed = s.alpha * z_tilde[i] + (1.0 - s.alpha) * self.z[i];
                let z_new = (relaxed + self.y[i] / self.rho_vec[i]).clamp(ls[i], us[i]);
                self.y[i] += self.rho_vec[i] * (relaxed - z_new);
                self.z[i] = z_new;
            }

            let check = iter % s.check_interval == 0 || iter == s.max_iter;
            let adapt = s.adapt_interval > 0 && iter % s.adapt_interval == 0;
            if !(check || adapt) {
                continue;
            }
            let r = self.residuals(&mut ax, &mut px, &mut aty);
            prim_res = r.prim;
            dual_res = r.dual;
            let eps_p = s.eps_abs + s.eps_rel * r.prim_scale;
            let eps_d = s.eps_abs + s.eps_rel * r.dual_scale;
            if prim_res <= eps_p && dual_res <= eps_d {
                status = RelaxStatus::Solved;
                break;
            }
            if self.primal_infeasible(&y_prev, &ls, &us) {
                status = RelaxStatus::PrimalInfeasible;
                break;
            }
            if self.dual_infeasible(&x_prev, &ls, &us) {
                status = RelaxStatus::DualInfeasible;
                break;
            }
            if let Some(dl) = deadline {
                if Instant::now() >= dl {
                    status = RelaxStatus::TimeLimit;
                    break;
                }
            }
            if adapt {
                let num = r.prim_scaled / r.prim_norm_scaled.max(1e-30);
                let den = r.dual_scaled / r.dual_norm_scaled.max(1e-30);
                let new_rho = (self.rho * (num / den.max(1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho {
                    self.set_rho(new_rho, &ls, &us)?;
                }
            }
        }

        let mut out = self.unscaled(status, iter, prim_res, dual_res);
        if s.polish && matches!(status, RelaxStatus::Solved | RelaxStatus::MaxIter | RelaxStatus::TimeLimit) {
            if let Some(pol) = self.polish(&ls, &us) {
                if pol.prim_res <= out.prim_res.max(s.eps_abs) && pol.dual_res <= out.dual_res.max(s.eps_abs) {
                    out = pol;
                }
            }
        }
        Ok(out)
    }

    fn residuals(&self, ax: &mut [f64], px: &mut [f64], aty: &mut [f64]) -> Residuals {
        let (n, mt) = (self.n, self.mt);
        self.a.mul_vec(&self.x, ax);
        self.p.sym_upper_mul_vec(&self.x, px);
        self.at.mul_vec(&self.y, aty);
        let mut prim = 0.0_f64;
        let mut prim_scaled = 0.0_f64;
        let mut axn = 0.0_f64;
        let mut zn = 0.0_f64;
        let mut axn_s = 0.0_f64;
        let mut zn_s = 0.0_f64;
        for i in 0..mt {
            let ei = 1.0 / self.e[i];
            let r = ax[i] - self.z[i];
            prim = prim.max((r * ei).abs());
            prim_scaled = prim_scaled.max(r.abs());
            axn = axn.max((ax[i] * ei).abs());
            zn = zn.max((self.z[i] * ei).abs());
            axn_s = axn_s.max(ax[i].abs());
            zn_s = zn_s.max(self.z[i].abs());
        }
        let mut dual = 0.0_f64;
        let mut dual_scaled = 0.0_f64;
        let (mut pn, mut an, mut qn) = (0.0_f64, 0.0_f64, 0.0_f64);
        let (mut pn_s, mut an_s, mut qn_s) = (0.0_f64, 0.0_f64, 0.0_f64);
        let ci = 1.0 / self.cost;
        for j in 0..n {
            let di = ci / self.d[j];
            let r = px[j] + self.q[j] + aty[j];
            dual = dual.max((r * di).abs());
            dual_scaled = dual_scaled.max(r.abs());
            pn = pn.max((px[j] * di).abs());
            an = an.max((aty[j] * di).abs());
            qn = qn.max((self.q[j] * di).abs());
            pn_s = pn_s.max(px[j].abs());
            an_s = an_s.max(aty[j].abs());
            qn_s = qn_s.max(self.q[j].abs());
        }
        Residuals {
            prim,
            dual,
            prim_scale: axn.max(zn),
            dual_scale: pn.max(an).max(qn),
            prim_scaled,
            dual_scaled,
            prim_norm_scaled: axn_s.max(zn_s),
            dual_norm_scaled: pn_s.max(an_s).max(qn_s),
        }
    }

    fn primal_infeasible(&self, y_prev: &[f64], ls: &[f64], us: &[f64]) -> bool {
        let mt = self.mt;
        let mut dy = vec![0.0; mt];
        for i in 0..mt {
            let mut v = self.y[i] - y_prev[i];
            if us[i] == f64::INFINITY {
                v = v.min(0.0);
            }
            if ls[i] == f64::NEG_INFINITY {
                v = v.max(0.0);
            }
            // Back to the unscaled row space.
            dy[i] = v * self.e[i];
        }
        let norm = inf_norm(&dy);
        if norm <= 1e-30 {
            return false;
        }
        let tol = self.settings.eps_inf * norm;
        let mut support = 0.0;
        for i in 0..mt {
            let (l, u) = (ls[i] / self.e[i], us[i] / self.e[i]);
            if dy[i] > 0.0 {
                support += u * dy[i];
            } else if dy[i] < 0.0 {
                support += l * dy[i];
            }
        }
        if !(support < -tol) {
            return false;
        }
        let mut atdy = vec![0.0; self.n];
        self.a0.tr_mul_vec(&dy, &mut atdy);
        inf_norm(&atdy) <= tol
    }

    fn dual_infeasible(&self, x_prev: &[f64], ls: &[f64], us: &[f64]) -> bool {
        let n = self.n;
        let dx: Vec<f64> = (0..n).map(|j| (self.x[j] - x_prev[j]) * self.d[j]).collect();
        let norm = inf_norm(&dx);
        if norm <= 1e-30 {
            return false;
        }
        let tol = self.settings.eps_inf * norm;
        let qdx: f64 = self.q0.iter().zip(&dx).map(|(a, b)| a * b).sum();
        if !(qdx < -tol) {
            return false;
        }
        let mut pdx = vec![0.0; n];
        self.p0.sym_upper_mul_vec(&dx, &mut pdx);
        if inf_norm(&pdx) > tol {
            return false;
        }
        let mut adx = vec![0.0; self.mt];
        self.a0.mul_vec(&dx, &mut adx);
        (0..self.mt).all(|i| {
            let upper_ok = us[i] == f64::INFINITY || adx[i] <= tol;
            let lower_ok = ls[i] == f64::NEG_INFINITY || adx[i] >= -tol;
            upper_ok && lower_ok
        })
    }

    fn unscaled(&self, status: RelaxStatus, iterations: usize, prim_res: f64, dual_res: f64) -> Relaxation {
        let x: Vec<f64> = (0..self.n).map(|j| self.x[j] * self.d[j]).collect();
        let y: Vec<f64> = (0..self.mt).map(|i| self.y[i] * self.e[i] / self.cost).collect();
        let objective = self.objective(&x);
        Relaxation { x, y, objective, status, iterations, prim_res, dual_res, polished: false }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; self.n];
        self.p0.sym_upper_mul_vec(x, &mut px);
        let quad: f64 = px.iter().zip(x).map(|(a, b)| a * b).sum();
        let lin: f64 = self.q0.iter().zip(x).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.offset
    }

    /// Lower bound on the optimum from any multiplier vector (weak duality).
    ///
    /// Multipliers of the bound rows absorb the stationarity residual so that
    /// `x` minimises the Lagrangian exactly; the bound is then
    /// `−½x'Px − σ_C(y) + offset` with `σ_C` the support function of `[l, u]`.
    pub fn dual_bound(&self, x: &[f64], y: &[f64], l: &[f64], u: &[f64]) -> f64 {
        let (n, mt) = (self.n, self.mt);
        let m = mt - n;
        let mut y = y.to_vec();
        for i in 0..m {
            if (y[i] > 0.0 && u[i] == f64::INFINITY) || (y[i] < 0.0 && l[i] == f64::NEG_INFINITY) {
                y[i] = 0.0;
            }
        }
        let mut px = vec![0.0; n];
        self.p0.sym_upper_mul_vec(x, &mut px);
        let mut aty = vec![0.0; n];
        self.a0.tr_mul_vec(&y, &mut aty);
        for j in 0..n {
            let r = px[j] + self.q0[j] + aty[j];
            y[m + j] -= r;
        }
        let mut support = 0.0;
        for i in 0..mt {
            if y[i] > 0.0 {
                if u[i] == f64::INFINITY {
                    return f64::NEG_INFINITY;
                }
                support += y[i] * u[i];
            } else if y[i] < 0.0 {
                if l[i] == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                support += y[i] * l[i];
            }
        }
        let quad: f64 = px.iter().zip(x).map(|(a, b)| a * b).sum();
        -0.5 * quad - support + self.offset
    }

    /// Solves the equality-constrained QP on the guessed active set.
    fn polish(&self, ls: &[f64], us: &[f64]) -> Option<Relaxation> {
        let (n, mt) = (self.n, self.mt);
        let mut act = Vec::new();
        let mut target = Vec::new();
        for i in 0..mt {
            let lower = self.z[i] - ls[i] < -self.y[i];
            let upper = us[i] - self.z[i] < self.y[i];
            if lower {
                act.push(i);
                target.push(ls[i]);
            } else if upper {
                act.push(i);
                target.push(us[i]);
            }
        }
        if target.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let na = act.len();
        let delta = 1e-7;
        let mut pos = vec![usize::MAX; mt];
        for (k, &i) in act.iter().enumerate() {
            pos[i] = k;
        }
        let mut trip = Vec::new();
        for (r, c, v) in self.p.triplets() {
            trip.push((r, c, v));
        }
        for j in 0..n {
            trip.push((j, j, delta));
        }
        let mut a_act = Vec::new();
        for (r, c, v) in self.a.triplets() {
            if pos[r] != usize::MAX {
                trip.push((c, n + pos[r], v));
                a_act.push((pos[r], c, v));
            }
        }
        for k in 0..na {
            trip.push((n + k, n + k, -delta));
        }
        let kkt = Csc::from_triplets(n + na, n + na, &trip);
        let mut ldl = Ldl::new(&kkt).ok()?;
        let a_red = Csc::from_triplets(na, n, &a_act);
        let mut rhs = vec![0.0; n + na];
        for j in 0..n {
            rhs[j] = -self.q[j];
        }
        for k in 0..na {
            rhs[n + k] = target[k];
        }
        let mut sol = rhs.clone();
        ldl.solve(&mut sol);
        // Iterative refinement against the unregularised system.
        let mut px = vec![0.0; n];
        let mut ax = vec![0.0; na];
        let mut aty = vec![0.0; n];
        for _ in 0..5 {
            self.p.sym_upper_mul_vec(&sol[..n], &mut px);
            a_red.tr_mul_vec(&sol[n..], &mut aty);
            a_red.mul_vec(&sol[..n], &mut ax);
            let mut res = vec![0.0; n + na];
            for j in 0..n {
                res[j] = rhs[j] - px[j] - aty[j];
            }
            for k in 0..na {
                res[n + k] = rhs[n + k] - ax[k];
            }
            if inf_norm(&res) < 1e-14 {
                break;
            }
            ldl.solve(&mut res);
            for (s, r) in sol.iter_mut().zip(&res) {
                *s += r;
            }
        }
        let xs = &sol[..n];
        let mut ys = vec![0.0; mt];
        for (k, &i) in act.iter().enumerate() {
            ys[i] = sol[n + k];
        }
        // Dual signs must match the side each row is active on.
        for (k, &i) in act.iter().enumerate() {
            let yi = ys[i];
            let scale = 1e-9 * (1.0 + inf_norm(&ys));
            let eq = us[i] - ls[i] < EQ_TOL;
            if !eq && target[k] == ls[i] && yi > scale {
                return None;
            }
            if !eq && target[k] == us[i] && yi < -scale {
                return None;
            }
        }
        let mut axs = vec![0.0; mt];
        self.a.mul_vec(xs, &mut axs);
        let mut prim = 0.0_f64;
        for i in 0..mt {
            let viol = (ls[i] - axs[i]).max(axs[i] - us[i]).max(0.0);
            prim = prim.max(viol / self.e[i]);
        }
        let mut pxs = vec![0.0; n];
        self.p.sym_upper_mul_vec(xs, &mut pxs);
        let mut atys = vec![0.0; n];
        self.at.mul_vec(&ys, &mut atys);
        let mut dual = 0.0_f64;
        for j in 0..n {
            dual = dual.max(((pxs[j] + self.q[j] + atys[j]) / (self.d[j] * self.cost)).abs());
        }
        let x: Vec<f64> = (0..n).map(|j| xs[j] * self.d[j]).collect();
        let y: Vec<f64> = (0..mt).map(|i| ys[i] * self.e[i] / self.cost).collect();
        let objective = self.objective(&x);
        Some(Relaxation {
            x,
            y,
            objective,
            status: RelaxStatus::Solved,
            iterations: 0,
            prim_res: prim,
            dual_res: dual,
            polished: true,
        })
    }
}

struct Residuals {
    prim: f64,
    dual: f64,
    prim_scale: f64,
    dual_scale: f64,
    prim_scaled: f64,
    dual_scaled: f64,
    prim_norm_scaled: f64,
    dual_norm_scaled: f64,
}

/// Solves the continuous relaxation of `problem` (binaries relaxed to `[0,1]`).
pub fn solve_relaxation(problem: &MioProblem, tol: f64, max_iter: usize) -> Result<Relaxation> {
    problem.validate()?;
    let settings = AdmmSettings { eps_abs: tol, eps_rel: tol, max_iter, ..AdmmSettings::default() };
    let mut solver = AdmmSolver::new(problem, settings)?;
    let (l, u) = AdmmSolver::stacked_bounds(problem, &problem.x_lo, &problem.x_hi);
    solver.solve(&l, &u, false, None)
}
