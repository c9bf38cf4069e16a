//! ℓ0-penalised selection of threshold factors, followed by a re-fit on
//! the chosen columns.
//!
//! Column 0 of the factor matrix (coefficient fixed at 1) and the trailing
//! constant column are always in the model; `forced_active` adds more.
//! Every other column is a candidate with an on/off switch `e_m` gating its
//! coefficient and a cost of `λ` when on.

use std::collections::HashSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim, invalid, Error, Result};
use crate::estimator::{build_miqp, estimate, estimate_restricted, Backend, BcdConfig, MiqpForm, RegimeHooks, Restriction};
use crate::model::{check_factors, regime_indicator, ssr, Dataset, EstimationResult, ParamVector, SearchSpace, Status};
use crate::optim::{branch_and_bound_with, BnbHooks, Completion, Csc, MioProblem, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    /// Subset enumeration when every subset fits the exact sweep, MIQP otherwise.
    #[default]
    Auto,
    /// One mixed-integer program with the switches as extra binaries.
    Miqp,
    /// One restricted estimate per admissible subset.
    Enumerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Penalty per active candidate, in units of the mean squared residual.
    /// `None` uses [`default_lambda`].
    pub lambda: Option<f64>,
    pub p_lo: usize,
    /// Defaults to the number of candidates.
    pub p_hi: Option<usize>,
    /// Factor columns that are always active.
    pub forced_active: Vec<usize>,
    pub method: SelectionMethod,
    pub form: MiqpForm,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { lambda: None, p_lo: 0, p_hi: None, forced_active: Vec::new(), method: SelectionMethod::Auto, form: MiqpForm::Alternative }
    }
}

impl SelectionConfig {
    /// Candidate columns for a factor matrix with `df` columns.
    pub fn candidates(&self, df: usize) -> Vec<usize> {
        (1..df.saturating_sub(1)).filter(|c| !self.forced_active.contains(c)).collect()
    }

    pub fn validate(&self, df: usize) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(invalid("lambda must be non-negative"));
            }
        }
        if self.forced_active.iter().any(|&c| c == 0 || c + 1 >= df) {
            return Err(invalid("forced_active must name factor columns between the first and the constant"));
        }
        let p = self.candidates(df).len();
        let hi = self.p_hi.unwrap_or(p);
        if !(self.p_lo <= hi && hi <= p) {
            return Err(invalid(format!("need 0 <= p_lo <= p_hi <= {p}, got {} and {hi}", self.p_lo)));
        }
        Ok(())
    }
}

/// `σ̂² log T / T` with `σ̂²` the mean squared pilot residual.
pub fn default_lambda(ds: &Dataset, pilot: &EstimationResult) -> f64 {
    let t = ds.t() as f64;
    pilot.objective.max(0.0) * t.ln() / t
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// Factor columns in the final model, sorted (column 0 and the constant included).
    pub active: Vec<usize>,
    pub lambda: f64,
    /// `S_T + λ·#selected` at the penalised optimum.
    pub penalized_objective: f64,
    /// Penalised-stage estimate on the full factor matrix.
    pub selection: EstimationResult,
    /// Re-estimate on the active columns only.
    pub refit: EstimationResult,
    /// `refit.params.gamma` expanded to all columns with zeros elsewhere.
    pub gamma_full: Vec<f64>,
}

fn dropped_restriction(df: usize, drop: &[usize]) -> Option<Restriction> {
    if drop.is_empty() {
        return None;
    }
    let mut r = DMatrix::zeros(drop.len(), df);
    for (i, &c) in drop.iter().enumerate() {
        r[(i, c)] = 1.0;
    }
    Some(Restriction::new(r, DVector::zeros(drop.len())).expect("distinct unit rows"))
}

fn subsets(p: usize, lo: usize, hi: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0u64..(1 << p)).map(|m| (0..p).filter(|&i| m >> i & 1 == 1).collect::<Vec<_>>()).collect();
    out.retain(|s| s.len() >= lo && s.len() <= hi);
    // Smaller sets first so that ties keep the sparser model.
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

pub fn select_factors(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    sel: &SelectionConfig,
    solver: &SolverConfig,
) -> Result<SelectionOutcome> {
    ds.validate()?;
    check_factors(factors, ds.t())?;
    let df = factors.ncols();
    if space.gamma2_lo.len() + 1 != df {
        return Err(dim("search space does not match the factor count"));
    }
    sel.validate(df)?;
    let cands = sel.candidates(df);
    let p = cands.len();
    let p_hi = sel.p_hi.unwrap_or(p);
    let method = match sel.method {
        SelectionMethod::Auto if df - 1 <= 3 => SelectionMethod::Enumerate,
        SelectionMethod::Auto => SelectionMethod::Miqp,
        m => m,
    };
    let pilot = |fits: Option<&[(Vec<usize>, EstimationResult)]>| -> Result<f64> {
        if let Some(l) = sel.lambda {
            return Ok(l);
        }
        // The pilot is the fit with every candidate on.
        let full = fits.and_then(|v| v.iter().find(|(on, _)| on.len() == p));
        let res = match full {
            Some((_, r)) => r.clone(),
            None => estimate(ds, factors, space, Backend::Auto, sel.form, solver, &BcdConfig::default())?,
        };
        Ok(default_lambda(ds, &res))
    };
    let (lambda, (chosen, selection, pen)) = match method {
        SelectionMethod::Enumerate => {
            let fits = subset_fits(ds, factors, space, sel, solver, &cands, p_hi)?;
            let lambda = pilot(Some(&fits))?;
            (lambda, pick(fits, lambda)?)
        }
        _ => {
            let lambda = pilot(None)?;
            (lambda, by_miqp(ds, factors, space, sel, solver, &cands, p_hi, lambda)?)
        }
    };

    let mut active: Vec<usize> = (0..df).filter(|c| !cands.contains(c) || chosen.contains(c)).collect();
    active.sort_unstable();
    let sub = factors.select_columns(&active);
    let keep: Vec<usize> = active[1..].iter().map(|c| c - 1).collect();
    let sub_space = space.restrict_gamma(&keep);
    let refit = estimate(ds, &sub, &sub_space, Backend::Auto, sel.form, solver, &BcdConfig::default())?;
    let mut gamma_full = vec![0.0; df];
    for (i, &c) in active.iter().enumerate() {
        gamma_full[c] = refit.params.gamma[i];
    }
    Ok(SelectionOutcome { active, lambda, penalized_objective: pen, selection, refit, gamma_full })
}

/// Restricted fits for every admissible subset, smallest subsets first.
fn subset_fits(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    sel: &SelectionConfig,
    solver: &SolverConfig,
    cands: &[usize],
    p_hi: usize,
) -> Result<Vec<(Vec<usize>, EstimationResult)>> {
    let df = factors.ncols();
    let mut out = Vec::new();
    for s in subsets(cands.len(), sel.p_lo, p_hi) {
        let on: Vec<usize> = s.iter().map(|&i| cands[i]).collect();
        let drop: Vec<usize> = cands.iter().cloned().filter(|c| !on.contains(c)).collect();
        let res = match dropped_restriction(df, &drop) {
            None => estimate(ds, factors, space, Backend::Auto, sel.form, solver, &BcdConfig::default()),
            Some(r) => estimate_restricted(ds, factors, space, &r, Backend::Auto, sel.form, solver),
        };
        match res {
            Ok(r) => out.push((on, r)),
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Penalised minimum over the subset fits; ties keep the earlier (smaller) subset.
fn pick(fits: Vec<(Vec<usize>, EstimationResult)>, lambda: f64) -> Result<(Vec<usize>, EstimationResult, f64)> {
    let mut best: Option<(Vec<usize>, EstimationResult, f64)> = None;
    for (on, res) in fits {
        let value = res.objective + lambda * on.len() as f64;
        if best.as_ref().is_none_or(|b| value < b.2 - 1e-12 * b.2.abs().max(1.0)) {
            best = Some((on, res, value));
        }
    }
    best.ok_or_else(|| Error::Infeasible("no admissible factor subset".into()))
}

struct SelectionHooks<'a> {
    inner: RegimeHooks<'a>,
    n0: usize,
    /// γ₂ coordinate gated by each switch.
    coords: Vec<usize>,
    p_hi: usize,
    df: usize,
    tried: HashSet<(Vec<u8>, Vec<u8>)>,
}

impl SelectionHooks<'_> {
    fn point(&self, p: &MioProblem, d: &[u8], e: &[u8], hint: Option<&[f64]>) -> Option<(Vec<f64>, f64)> {
        let drop: Vec<usize> = self.coords.iter().zip(e).filter(|(_, &v)| v == 0).map(|(&k, _)| k + 1).collect();
        let restr = dropped_restriction(self.df, &drop);
        let mut x = self.inner.pattern_point(d, hint, restr.as_ref())?;
        x.extend(e.iter().map(|&v| v as f64));
        let obj = p.objective(&x);
        Some((x, obj))
    }
}

impl BnbHooks for SelectionHooks<'_> {
    fn complete(&mut self, p: &MioProblem, lo: &[f64], _hi: &[f64]) -> Completion {
        let lay = self.inner.lay;
        let d: Vec<u8> = (0..lay.t).map(|r| u8::from(lo[lay.d() + r] > 0.5)).collect();
        let e: Vec<u8> = (0..self.coords.len()).map(|m| u8::from(lo[self.n0 + m] > 0.5)).collect();
        match self.point(p, &d, &e, None) {
            Some((x, objective)) => Completion::Feasible { x, objective },
            None => Completion::Infeasible,
        }
    }

    fn heuristic(&mut self, p: &MioProblem, x_relax: &[f64], lo: &[f64], hi: &[f64]) -> Option<(Vec<f64>, f64)> {
        let lay = self.inner.lay;
        let space = self.inner.space;
        // Switch on the largest coefficients allowed by the node and p_hi.
        let mut order: Vec<usize> = (0..self.coords.len()).collect();
        order.sort_by(|&a, &b| {
            let ga = x_relax[lay.gamma() + self.coords[a]].abs();
            let gb = x_relax[lay.gamma() + self.coords[b]].abs();
            gb.total_cmp(&ga)
        });
        let mut e = vec![0u8; self.coords.len()];
        let mut count = 0;
        for &m in &order {
            let j = self.n0 + m;
            if lo[j] > 0.5 || (hi[j] > 0.5 && count < self.p_hi) {
                e[m] = 1;
                count += 1;
            }
        }
        let mut gamma = vec![1.0];
        for k in 0..lay.dg {
            gamma.push(x_relax[lay.gamma() + k].clamp(space.gamma2_lo[k], space.gamma2_hi[k]));
        }
        for (m, &k) in self.coords.iter().enumerate() {
            if e[m] == 0 {
                gamma[k + 1] = 0.0;
            }
        }
        let d = regime_indicator(self.inner.f, &gamma).ok()?;
        if !self.tried.insert((d.clone(), e.clone())) {
            return None;
        }
        self.point(p, &d, &e, Some(&gamma))
    }
}

#[allow(clippy::too_many_arguments)]
fn by_miqp(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    sel: &SelectionConfig,
    solver: &SolverConfig,
    cands: &[usize],
    p_hi: usize,
    lambda: f64,
) -> Result<(Vec<usize>, EstimationResult, f64)> {
    let start = Instant::now();
    let (base, lay) = build_miqp(ds, factors, space, sel.form)?;
    let (n0, m0) = (base.n(), base.m());
    let p = cands.len();
    let n = n0 + p;
    let mut trip = base.a.triplets();
    let (mut b_lo, mut b_hi) = (base.b_lo.clone(), base.b_hi.clone());
    let coords: Vec<usize> = cands.iter().map(|c| c - 1).collect();
    let mut row = m0;
    for (m, &k) in coords.iter().enumerate() {
        let g = lay.gamma() + k;
        trip.push((row, g, 1.0));
        trip.push((row, n0 + m, -space.gamma2_lo[k]));
        b_lo.push(0.0);
        b_hi.push(f64::INFINITY);
        row += 1;
        trip.push((row, g, 1.0));
        trip.push((row, n0 + m, -space.gamma2_hi[k]));
        b_lo.push(f64::NEG_INFINITY);
        b_hi.push(0.0);
        row += 1;
    }
    if p > 0 {
        for m in 0..p {
            trip.push((row, n0 + m, 1.0));
        }
        b_lo.push(sel.p_lo as f64);
        b_hi.push(p_hi as f64);
        row += 1;
    }
    let mut c = base.c.clone();
    c.extend(std::iter::repeat_n(lambda, p));
    let mut x_lo = base.x_lo.clone();
    let mut x_hi = base.x_hi.clone();
    x_lo.extend(std::iter::repeat_n(0.0, p));
    x_hi.extend(std::iter::repeat_n(1.0, p));
    let mut binary_idx = base.binary_idx.clone();
    binary_idx.extend(n0..n);
    let prob = MioProblem {
        q: Csc::from_triplets(n, n, &base.q.triplets()),
        c,
        offset: base.offset,
        a: Csc::from_triplets(row, n, &trip),
        b_lo,
        b_hi,
        x_lo,
        x_hi,
        binary_idx,
    };
    let mut hooks = SelectionHooks {
        inner: RegimeHooks::new(ds, factors, space, lay, None),
        n0,
        coords: coords.clone(),
        p_hi,
        df: factors.ncols(),
        tried: HashSet::new(),
    };
    let sol = branch_and_bound_with(&prob, solver, None, &mut hooks)?;
    if sol.x.is_empty() {
        return Err(match sol.status {
            Status::Infeasible => Error::Infeasible("no admissible factor subset".into()),
            _ => Error::Solver("time limit reached before any feasible point was found".into()),
        });
    }
    let chosen: Vec<usize> = (0..p).filter(|&m| sol.x[n0 + m] > 0.5).map(|m| cands[m]).collect();
    let mut gamma = vec![1.0];
    gamma.extend((0..lay.dg).map(|k| sol.x[lay.gamma() + k]));
    for (m, &k) in coords.iter().enumerate() {
        if sol.x[n0 + m] <= 0.5 {
            gamma[k + 1] = 0.0;
        }
    }
    let dx = lay.dx;
    let (lo_d, _) = space.delta_bounds();
    let beta = sol.x[..dx].to_vec();
    let delta = (0..dx)
        .map(|j| match lay.form {
            MiqpForm::Basic => sol.x[lay.delta() + j],
            MiqpForm::Alternative => sol.x[lay.delta() + j] + lo_d[j],
        })
        .collect();
    let params = ParamVector::new(beta, delta, gamma)?;
    let objective = ssr(ds, &params, factors)?;
    let d = regime_indicator(factors, &params.gamma)?;
    let pen = objective + lambda * chosen.len() as f64;
    let res = EstimationResult {
        params,
        objective,
        d,
        gap: sol.gap,
        status: sol.status,
        wall_time: start.elapsed().as_secs_f64(),
        trace: vec![objective],
        degenerate: false,
        nodes_explored: sol.nodes_explored,
    };
    Ok((chosen, res, pen))
}
