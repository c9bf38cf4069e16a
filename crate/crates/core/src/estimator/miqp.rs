//! Mixed-integer formulations of the least-squares problem.
//!
//! Variables are stacked as `(β, δ or δ̃, γ₂, d₁..d_T, ℓ)` with `ℓ` stored
//! row-major in `t`. The regime binaries are linked to the index through
//! big-M rows; the product `δ_j d_t` is carried by `ℓ_{j,t}`.

use std::collections::HashSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{compute_mt, fit_alpha_box, separating_gamma, MiqpForm, Restriction};
use crate::error::{dim, Error, Result};
use crate::model::{check_factors, regime_indicator, ssr, Dataset, EstimationResult, ParamVector, SearchSpace, Status};
use crate::optim::{branch_and_bound_with, BnbHooks, Completion, Csc, MioProblem, SolverConfig};

/// Where each block lives in the flattened variable vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiqpLayout {
    pub form: MiqpForm,
    pub t: usize,
    pub dx: usize,
    pub dg: usize,
}

impl MiqpLayout {
    pub fn beta(&self) -> usize {
        0
    }
    pub fn delta(&self) -> usize {
        self.dx
    }
    pub fn gamma(&self) -> usize {
        2 * self.dx
    }
    pub fn d(&self) -> usize {
        2 * self.dx + self.dg
    }
    pub fn ell(&self, t: usize, j: usize) -> usize {
        self.d() + self.t + t * self.dx + j
    }
    pub fn n(&self) -> usize {
        2 * self.dx + self.dg + self.t * (1 + self.dx)
    }
}

struct Rows {
    trip: Vec<(usize, usize, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Rows {
    fn push(&mut self, entries: &[(usize, f64)], lo: f64, hi: f64) {
        let r = self.lo.len();
        for &(c, v) in entries {
            if v != 0.0 {
                self.trip.push((r, c, v));
            }
        }
        self.lo.push(lo);
        self.hi.push(hi);
    }
}

pub fn build_miqp(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace, form: MiqpForm) -> Result<(MioProblem, MiqpLayout)> {
    build_miqp_restricted(ds, factors, space, form, None)
}

pub fn build_miqp_restricted(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    form: MiqpForm,
    restriction: Option<&Restriction>,
) -> Result<(MioProblem, MiqpLayout)> {
    ds.validate()?;
    space.validate()?;
    let (t, dx) = (ds.t(), ds.dx());
    check_factors(factors, t)?;
    let df = factors.ncols();
    if space.dx() != dx || space.gamma2_lo.len() != df - 1 {
        return Err(dim("search space does not match the data dimensions"));
    }
    if let Some(r) = restriction {
        if r.df() != df {
            return Err(dim("restriction width differs from the factor count"));
        }
    }
    let lay = MiqpLayout { form, t, dx, dg: df - 1 };
    let n = lay.n();
    let (lo_d, hi_d) = space.delta_bounds();
    let width: Vec<f64> = (0..dx).map(|j| hi_d[j] - lo_d[j]).collect();
    let wsum: f64 = width.iter().sum();
    let tf = t as f64;

    // Objective (1/T) Σ (y_t − w_t'z)²  =  ½ z'Qz + c'z + y'y/T.
    let mut qtrip = Vec::with_capacity(t * (2 * dx + 1) * (2 * dx + 2) / 2);
    let mut c = vec![0.0; n];
    let mut w: Vec<(usize, f64)> = Vec::with_capacity(2 * dx + 1);
    for r in 0..t {
        w.clear();
        for j in 0..dx {
            w.push((lay.beta() + j, ds.x[(r, j)]));
        }
        for j in 0..dx {
            w.push((lay.ell(r, j), ds.x[(r, j)]));
        }
        if form == MiqpForm::Alternative {
            let xl: f64 = (0..dx).map(|j| ds.x[(r, j)] * lo_d[j]).sum();
            w.push((lay.d() + r, xl));
        }
        for a in 0..w.len() {
            let (ia, va) = w[a];
            c[ia] -= 2.0 / tf * ds.y[r] * va;
            for &(ib, vb) in &w[a..] {
                let (i, j) = if ia <= ib { (ia, ib) } else { (ib, ia) };
                qtrip.push((i, j, 2.0 / tf * va * vb));
            }
        }
    }
    let q = Csc::from_triplets(n, n, &qtrip);
    let offset = ds.y.norm_squared() / tf;

    let mut x_lo = vec![0.0; n];
    let mut x_hi = vec![1.0; n];
    for j in 0..dx {
        x_lo[lay.beta() + j] = space.alpha_lo[j];
        x_hi[lay.beta() + j] = space.alpha_hi[j];
        match form {
            MiqpForm::Basic => {
                x_lo[lay.delta() + j] = lo_d[j];
                x_hi[lay.delta() + j] = hi_d[j];
            }
            MiqpForm::Alternative => {
                x_lo[lay.delta() + j] = 0.0;
                x_hi[lay.delta() + j] = width[j];
            }
        }
        for r in 0..t {
            let (l, h) = match form {
                MiqpForm::Basic => (lo_d[j].min(0.0), hi_d[j].max(0.0)),
                MiqpForm::Alternative => (0.0, width[j]),
            };
            x_lo[lay.ell(r, j)] = l;
            x_hi[lay.ell(r, j)] = h;
        }
    }
    for k in 0..lay.dg {
        x_lo[lay.gamma() + k] = space.gamma2_lo[k];
        x_hi[lay.gamma() + k] = space.gamma2_hi[k];
    }

    let eps = space.eps_strict;
    let inf = f64::INFINITY;
    let mut rows = Rows { trip: Vec::new(), lo: Vec::new(), hi: Vec::new() };
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(lay.dg + 2);
    for r in 0..t {
        let ft: Vec<f64> = factors.row(r).iter().cloned().collect();
        let m = compute_mt(&ft, space);
        let di = lay.d() + r;
        entries.clear();
        entries.extend((0..lay.dg).map(|k| (lay.gamma() + k, ft[k + 1])));
        // f_t'γ ≤ d_t M_t
        entries.push((di, -m));
        rows.push(&entries, -inf, -ft[0]);
        // f_t'γ ≥ ε when d_t = 1 and ≥ −(M_t + ε) otherwise
        entries.pop();
        entries.push((di, -(m + 2.0 * eps)));
        rows.push(&entries, -(m + eps) - ft[0], inf);
    }
    match form {
        MiqpForm::Basic => {
            for r in 0..t {
                let di = lay.d() + r;
                for j in 0..dx {
                    let li = lay.ell(r, j);
                    let dj = lay.delta() + j;
                    rows.push(&[(li, 1.0), (di, -lo_d[j])], 0.0, inf);
                    rows.push(&[(li, 1.0), (di, -hi_d[j])], -inf, 0.0);
                    rows.push(&[(dj, 1.0), (li, -1.0), (di, lo_d[j])], lo_d[j], inf);
                    rows.push(&[(dj, 1.0), (li, -1.0), (di, hi_d[j])], -inf, hi_d[j]);
                }
            }
        }
        MiqpForm::Alternative => {
            for r in 0..t {
                let di = lay.d() + r;
                for j in 0..dx {
                    rows.push(&[(lay.ell(r, j), 1.0), (lay.delta() + j, -1.0)], -inf, 0.0);
                }
                entries.clear();
                entries.extend((0..dx).map(|j| (lay.ell(r, j), 1.0)));
                entries.push((di, -wsum));
                rows.push(&entries, -inf, 0.0);
                entries.clear();
                entries.extend((0..dx).map(|j| (lay.delta() + j, 1.0)));
                entries.extend((0..dx).map(|j| (lay.ell(r, j), -1.0)));
                entries.push((di, wsum));
                rows.push(&entries, -inf, wsum);
            }
        }
    }
    let (clo, chi) = space.count_window(t);
    entries.clear();
    entries.extend((0..t).map(|r| (lay.d() + r, 1.0)));
    rows.push(&entries, clo as f64, chi as f64);
    if let Some(rs) = restriction {
        let (r2, rhs) = rs.on_gamma2();
        for i in 0..r2.nrows() {
            entries.clear();
            entries.extend((0..lay.dg).map(|k| (lay.gamma() + k, r2[(i, k)])));
            rows.push(&entries, rhs[i], rhs[i]);
        }
    }
    let m = rows.lo.len();
    let p = MioProblem {
        q,
        c,
        offset,
        a: Csc::from_triplets(m, n, &rows.trip),
        b_lo: rows.lo,
        b_hi: rows.hi,
        x_lo,
        x_hi,
        binary_idx: (0..t).map(|r| lay.d() + r).collect(),
    };
    Ok((p, lay))
}

/// Problem-specific completion: with the regime pattern fixed, the
/// continuous part splits into a box-constrained least squares for α and
/// a feasibility LP for γ.
pub(crate) struct RegimeHooks<'a> {
    pub ds: &'a Dataset,
    pub f: &'a DMatrix<f64>,
    pub space: &'a SearchSpace,
    pub lay: MiqpLayout,
    pub restriction: Option<&'a Restriction>,
    pub tried: HashSet<Vec<u8>>,
}

impl<'a> RegimeHooks<'a> {
    pub fn new(ds: &'a Dataset, f: &'a DMatrix<f64>, space: &'a SearchSpace, lay: MiqpLayout, restriction: Option<&'a Restriction>) -> Self {
        Self { ds, f, space, lay, restriction, tried: HashSet::new() }
    }

    /// Full variable vector for pattern `d`, or `None` when no γ realises it.
    pub fn assemble(&self, p: &MioProblem, d: &[u8], gamma_hint: Option<&[f64]>) -> Option<(Vec<f64>, f64)> {
        let x = self.pattern_point(d, gamma_hint, self.restriction)?;
        let obj = p.objective(&x);
        Some((x, obj))
    }

    /// Packed `(α, γ, d, ℓ)` for pattern `d` under `restriction`.
    pub fn pattern_point(&self, d: &[u8], gamma_hint: Option<&[f64]>, restriction: Option<&Restriction>) -> Option<Vec<f64>> {
        if !self.space.share_ok(d.iter().filter(|&&v| v != 0).count(), d.len()) {
            return None;
        }
        let eps = self.space.eps_strict;
        let hint_ok = gamma_hint.filter(|g| {
            restriction.is_none()
                && crate::model::index_values(self.f, g).iter().zip(d).all(|(&v, &dt)| if dt != 0 { v >= eps } else { v <= 0.0 })
        });
        let gamma = match hint_ok {
            Some(g) => g.to_vec(),
            None => separating_gamma(self.f, d, self.space, eps, restriction)?,
        };
        let (alpha, _, _) = fit_alpha_box(&self.ds.x, &self.ds.y, d, self.space);
        Some(pack(&self.lay, self.space, &alpha, &gamma, d))
    }
}

fn pack(lay: &MiqpLayout, space: &SearchSpace, alpha: &DVector<f64>, gamma: &[f64], d: &[u8]) -> Vec<f64> {
    let dx = lay.dx;
    let (lo_d, _) = space.delta_bounds();
    let mut x = vec![0.0; lay.n()];
    for j in 0..dx {
        x[lay.beta() + j] = alpha[j];
        let dl = match lay.form {
            MiqpForm::Basic => alpha[dx + j],
            MiqpForm::Alternative => alpha[dx + j] - lo_d[j],
        };
        x[lay.delta() + j] = dl;
        for r in 0..lay.t {
            x[lay.ell(r, j)] = if d[r] != 0 { dl } else { 0.0 };
        }
    }
    for k in 0..lay.dg {
        x[lay.gamma() + k] = gamma[k + 1];
    }
    for r in 0..lay.t {
        x[lay.d() + r] = d[r] as f64;
    }
    x
}

impl BnbHooks for RegimeHooks<'_> {
    fn complete(&mut self, p: &MioProblem, lo: &[f64], _hi: &[f64]) -> Completion {
        let d: Vec<u8> = (0..self.lay.t).map(|r| u8::from(lo[self.lay.d() + r] > 0.5)).collect();
        match self.assemble(p, &d, None) {
            Some((x, objective)) => Completion::Feasible { x, objective },
            None => Completion::Infeasible,
        }
    }

    fn heuristic(&mut self, p: &MioProblem, x_relax: &[f64], _lo: &[f64], _hi: &[f64]) -> Option<(Vec<f64>, f64)> {
        let mut gamma = vec![1.0];
        for k in 0..self.lay.dg {
            let j = self.lay.gamma() + k;
            gamma.push(x_relax[j].clamp(self.space.gamma2_lo[k], self.space.gamma2_hi[k]));
        }
        let d = regime_indicator(self.f, &gamma).ok()?;
        if !self.tried.insert(d.clone()) {
            return None;
        }
        self.assemble(p, &d, Some(&gamma))
    }
}

pub fn estimate_miqp(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace, form: MiqpForm, cfg: &SolverConfig) -> Result<EstimationResult> {
    estimate_miqp_restricted(ds, factors, space, form, cfg, None)
}

pub fn estimate_miqp_restricted(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    form: MiqpForm,
    cfg: &SolverConfig,
    restriction: Option<&Restriction>,
) -> Result<EstimationResult> {
    estimate_miqp_warm(ds, factors, space, form, cfg, restriction, None)
}

pub(crate) fn estimate_miqp_warm(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    form: MiqpForm,
    cfg: &SolverConfig,
    restriction: Option<&Restriction>,
    warm_gamma: Option<&[f64]>,
) -> Result<EstimationResult> {
    let start = Instant::now();
    let (p, lay) = build_miqp_restricted(ds, factors, space, form, restriction)?;
    let mut hooks = RegimeHooks::new(ds, factors, space, lay, restriction);
    let warm = warm_gamma
        .and_then(|g| {
            let d = regime_indicator(factors, g).ok()?;
            hooks.assemble(&p, &d, Some(g)).map(|(x, _)| x)
        })
        .or_else(|| threshold_start(&hooks, &p));
    let sol = branch_and_bound_with(&p, cfg, warm.as_deref(), &mut hooks)?;
    if sol.x.is_empty() {
        return Err(match sol.status {
            Status::Infeasible => Error::Infeasible("no regime pattern satisfies the constraints".into()),
            _ => Error::Solver("time limit reached before any feasible point was found".into()),
        });
    }
    let d_solver: Vec<u8> = (0..lay.t).map(|r| u8::from(sol.x[lay.d() + r] > 0.5)).collect();
    let gamma_solver: Vec<f64> = std::iter::once(1.0).chain((0..lay.dg).map(|k| sol.x[lay.gamma() + k])).collect();
    // Polish the continuous part for the incumbent pattern.
    let (x, degenerate) = match hooks.assemble(&p, &d_solver, Some(&gamma_solver)) {
        Some((x, _)) => (x, false),
        None => (sol.x.clone(), true),
    };
    let params = unpack(&lay, space, &x)?;
    let d = regime_indicator(factors, &params.gamma)?;
    let mismatch = d.iter().zip(&d_solver).filter(|(a, b)| a != b).count();
    if mismatch > 0 && !degenerate {
        return Err(Error::Solver(format!("returned γ disagrees with the solver's regimes in {mismatch} rows")));
    }
    let objective = ssr(ds, &params, factors)?;
    let fit_degenerate = {
        let n1 = d.iter().filter(|&&v| v != 0).count();
        n1 == 0 || n1 == lay.t
    };
    Ok(EstimationResult {
        params,
        objective,
        d,
        gap: sol.gap,
        status: sol.status,
        wall_time: start.elapsed().as_secs_f64(),
        trace: vec![objective],
        degenerate: degenerate || fit_degenerate,
        nodes_explored: sol.nodes_explored,
    })
}

/// Cheap incumbent for large problems, where the first relaxations can use
/// up the time limit: the best split on the leading factor alone, with the
/// threshold placed between sample values at a few regime shares.
fn threshold_start(hooks: &RegimeHooks<'_>, p: &MioProblem) -> Option<Vec<f64>> {
    let (f, space, lay) = (hooks.f, hooks.space, hooks.lay);
    let last = lay.dg.checked_sub(1)?;
    let mut lead: Vec<f64> = f.column(0).iter().copied().collect();
    lead.sort_by(f64::total_cmp);
    let t = lead.len();
    let (lo_cnt, hi_cnt) = space.count_window(t);
    let (lo_cnt, hi_cnt) = (lo_cnt.max(1), hi_cnt.min(t.saturating_sub(1)));
    if lo_cnt > hi_cnt || (0..last).any(|k| space.gamma2_lo[k] > 0.0 || space.gamma2_hi[k] < 0.0) {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for share in [0.5, 0.35, 0.65, 0.2, 0.8] {
        let ones = ((share * t as f64).round() as usize).clamp(lo_cnt, hi_cnt);
        let (a, b) = (lead[t - ones - 1], lead[t - ones]);
        if b - a < 2.0 * space.eps_strict {
            continue;
        }
        let c = 0.5 * (a + b);
        if c < space.gamma2_lo[last] || c > space.gamma2_hi[last] {
            continue;
        }
        let mut gamma = vec![0.0; lay.dg + 1];
        gamma[0] = 1.0;
        gamma[lay.dg] = c;
        let Ok(d) = regime_indicator(f, &gamma) else { continue };
        if let Some((x, obj)) = hooks.assemble(p, &d, Some(&gamma)) {
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, x));
            }
        }
    }
    best.map(|(_, x)| x)
}

fn unpack(lay: &MiqpLayout, space: &SearchSpace, x: &[f64]) -> Result<ParamVector> {
    let dx = lay.dx;
    let (lo_d, _) = space.delta_bounds();
    let beta = x[..dx].to_vec();
    let delta = (0..dx)
        .map(|j| match lay.form {
            MiqpForm::Basic => x[lay.delta() + j],
            MiqpForm::Alternative => x[lay.delta() + j] + lo_d[j],
        })
        .collect();
    let gamma = std::iter::once(1.0).chain((0..lay.dg).map(|k| x[lay.gamma() + k])).collect();
    ParamVector::new(beta, delta, gamma)
}
