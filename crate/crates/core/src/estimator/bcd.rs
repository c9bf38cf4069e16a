//! Block coordinate descent: a time-limited MIQP start, then alternating
//! MILP steps in `(γ, d)` with the α block held fixed and closed-form
//! least squares in α.

use std::collections::HashSet;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::miqp::estimate_miqp_warm;
use super::{compute_mt, fit_alpha_box, milp_exact, separating_gamma, MiqpForm, Restriction};
use crate::error::{invalid, Error, Result};
use crate::model::{regime_indicator, ssr, Dataset, EstimationResult, ParamVector, SearchSpace, Status};
use crate::optim::{branch_and_bound_with, BnbHooks, Completion, Csc, MioProblem, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcdConfig {
    /// Seconds for the initial MIQP.
    pub max_time_1: f64,
    /// Seconds for each MILP step.
    pub max_time_2: f64,
    pub max_outer_iter: usize,
    /// Optional cap on the whole run, in seconds.
    pub time_budget: Option<f64>,
    pub form: MiqpForm,
}

impl Default for BcdConfig {
    fn default() -> Self {
        Self { max_time_1: 60.0, max_time_2: 10.0, max_outer_iter: 100, time_budget: None, form: MiqpForm::Alternative }
    }
}

impl BcdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_time_1 > 0.0 && self.max_time_2 > 0.0) || self.max_outer_iter == 0 {
            return Err(invalid("BCD time limits and iteration count must be positive"));
        }
        if let Some(b) = self.time_budget {
            if !(b > 0.0) {
                return Err(invalid("BCD time budget must be positive"));
            }
        }
        Ok(())
    }
}

/// MILP costs `c_t = (x_t'δ)² − 2(y_t − x_t'β)x_t'δ`, so that
/// `S_T(α, γ) = (1/T)Σ(y_t − x_t'β)² + (1/T)Σ c_t d_t`.
pub(crate) fn milp_costs(ds: &Dataset, beta: &[f64], delta: &[f64]) -> Vec<f64> {
    (0..ds.t())
        .map(|r| {
            let xb: f64 = (0..ds.dx()).map(|j| ds.x[(r, j)] * beta[j]).sum();
            let xd: f64 = (0..ds.dx()).map(|j| ds.x[(r, j)] * delta[j]).sum();
            xd * xd - 2.0 * (ds.y[r] - xb) * xd
        })
        .collect()
}

/// Variables `(γ₂, d)`; objective `(1/T)Σ c_t d_t`.
fn build_gamma_milp(f: &DMatrix<f64>, c: &[f64], space: &SearchSpace, restriction: Option<&Restriction>) -> MioProblem {
    let (t, df) = f.shape();
    let dg = df - 1;
    let n = dg + t;
    let eps = space.eps_strict;
    let mut trip = Vec::new();
    let (mut b_lo, mut b_hi) = (Vec::new(), Vec::new());
    for r in 0..t {
        let ft: Vec<f64> = f.row(r).iter().cloned().collect();
        let m = compute_mt(&ft, space);
        for (row, dcoef, lo, hi) in [(2 * r, -m, f64::NEG_INFINITY, -ft[0]), (2 * r + 1, -(m + 2.0 * eps), -(m + eps) - ft[0], f64::INFINITY)] {
            for k in 0..dg {
                if ft[k + 1] != 0.0 {
                    trip.push((row, k, ft[k + 1]));
                }
            }
            trip.push((row, dg + r, dcoef));
            b_lo.push(lo);
            b_hi.push(hi);
        }
    }
    let (clo, chi) = space.count_window(t);
    let row = b_lo.len();
    for r in 0..t {
        trip.push((row, dg + r, 1.0));
    }
    b_lo.push(clo as f64);
    b_hi.push(chi as f64);
    if let Some(rs) = restriction {
        let (r2, rhs) = rs.on_gamma2();
        for i in 0..r2.nrows() {
            let row = b_lo.len();
            for k in 0..dg {
                if r2[(i, k)] != 0.0 {
                    trip.push((row, k, r2[(i, k)]));
                }
            }
            b_lo.push(rhs[i]);
            b_hi.push(rhs[i]);
        }
    }
    let mut x_lo = vec![0.0; n];
    let mut x_hi = vec![1.0; n];
    x_lo[..dg].copy_from_slice(&space.gamma2_lo);
    x_hi[..dg].copy_from_slice(&space.gamma2_hi);
    let mut cvec = vec![0.0; n];
    for r in 0..t {
        cvec[dg + r] = c[r] / t as f64;
    }
    let m = b_lo.len();
    MioProblem {
        q: Csc::zeros(n, n),
        c: cvec,
        offset: 0.0,
        a: Csc::from_triplets(m, n, &trip),
        b_lo,
        b_hi,
        x_lo,
        x_hi,
        binary_idx: (dg..n).collect(),
    }
}

struct MilpHooks<'a> {
    f: &'a DMatrix<f64>,
    space: &'a SearchSpace,
    restriction: Option<&'a Restriction>,
    tried: HashSet<Vec<u8>>,
}

impl MilpHooks<'_> {
    fn assemble(&self, p: &MioProblem, d: &[u8], hint: Option<&[f64]>) -> Option<(Vec<f64>, f64)> {
        if !self.space.share_ok(d.iter().filter(|&&v| v != 0).count(), d.len()) {
            return None;
        }
        let eps = self.space.eps_strict;
        let hint_ok = hint.filter(|g| {
            self.restriction.is_none()
                && crate::model::index_values(self.f, g).iter().zip(d).all(|(&v, &dt)| if dt != 0 { v >= eps } else { v <= 0.0 })
        });
        let gamma = match hint_ok {
            Some(g) => g.to_vec(),
            None => separating_gamma(self.f, d, self.space, eps, self.restriction)?,
        };
        let dg = gamma.len() - 1;
        let mut x = gamma[1..].to_vec();
        x.extend(d.iter().map(|&v| v as f64));
        debug_assert_eq!(x.len(), dg + d.len());
        let obj = p.objective(&x);
        Some((x, obj))
    }
}

impl BnbHooks for MilpHooks<'_> {
    fn complete(&mut self, p: &MioProblem, lo: &[f64], _hi: &[f64]) -> Completion {
        let dg = self.f.ncols() - 1;
        let d: Vec<u8> = lo[dg..].iter().map(|&v| u8::from(v > 0.5)).collect();
        match self.assemble(p, &d, None) {
            Some((x, objective)) => Completion::Feasible { x, objective },
            None => Completion::Infeasible,
        }
    }

    fn heuristic(&mut self, p: &MioProblem, x_relax: &[f64], _lo: &[f64], _hi: &[f64]) -> Option<(Vec<f64>, f64)> {
        let dg = self.f.ncols() - 1;
        let mut gamma = vec![1.0];
        for k in 0..dg {
            gamma.push(x_relax[k].clamp(self.space.gamma2_lo[k], self.space.gamma2_hi[k]));
        }
        let d = regime_indicator(self.f, &gamma).ok()?;
        if !self.tried.insert(d.clone()) {
            return None;
        }
        self.assemble(p, &d, Some(&gamma))
    }
}

/// One `(γ, d)` step for fixed α: exact sweep when at most three threshold
/// coefficients are free, branch and bound otherwise (warm-started at
/// `warm_gamma`). Returns `(γ, d, status)`.
pub fn gamma_step(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    beta: &[f64],
    delta: &[f64],
    restriction: Option<&Restriction>,
    warm_gamma: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Vec<u8>, Status)> {
    let c = milp_costs(ds, beta, delta);
    let dg = factors.ncols() - 1;
    let free = match restriction {
        None => Some(dg),
        Some(r) => r.as_fixings().map(|fx| fx.iter().filter(|v| v.is_none()).count()),
    };
    if free.is_some_and(|k| k <= 3) {
        let (g, d, _) = milp_exact(factors, &c, space, restriction)?;
        return Ok((g, d, Status::Optimal));
    }
    let p = build_gamma_milp(factors, &c, space, restriction);
    let mut hooks = MilpHooks { f: factors, space, restriction, tried: HashSet::new() };
    let warm = warm_gamma.and_then(|g| {
        let d = regime_indicator(factors, g).ok()?;
        hooks.assemble(&p, &d, Some(g)).map(|(x, _)| x)
    });
    let sol = branch_and_bound_with(&p, cfg, warm.as_deref(), &mut hooks)?;
    if sol.x.is_empty() {
        return Err(match sol.status {
            Status::Infeasible => Error::Infeasible("no regime pattern satisfies the constraints".into()),
            _ => Error::Solver("MILP step found no feasible point within its time limit".into()),
        });
    }
    let d: Vec<u8> = sol.x[dg..].iter().map(|&v| u8::from(v > 0.5)).collect();
    let gamma: Vec<f64> = std::iter::once(1.0).chain(sol.x[..dg].iter().cloned()).collect();
    let gamma = match hooks.assemble(&p, &d, Some(&gamma)) {
        Some((x, _)) => std::iter::once(1.0).chain(x[..dg].iter().cloned()).collect(),
        None => gamma,
    };
    let d = regime_indicator(factors, &gamma)?;
    Ok((gamma, d, sol.status))
}

pub fn bcd(ds: &Dataset, factors: &DMatrix<f64>, space: &SearchSpace, cfg: &BcdConfig, solver: &SolverConfig) -> Result<EstimationResult> {
    bcd_restricted(ds, factors, space, cfg, solver, None)
}

pub(crate) fn bcd_restricted(
    ds: &Dataset,
    factors: &DMatrix<f64>,
    space: &SearchSpace,
    cfg: &BcdConfig,
    solver: &SolverConfig,
    restriction: Option<&Restriction>,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let start = Instant::now();
    let budget = cfg.time_budget.unwrap_or(f64::INFINITY);
    let first_limit = cfg.max_time_1.min(budget);
    let first = estimate_miqp_warm(ds, factors, space, cfg.form, &solver.with_time_limit(first_limit), restriction, None)?;
    if first.status == Status::Optimal {
        return Ok(EstimationResult { wall_time: start.elapsed().as_secs_f64(), ..first });
    }
    let lower = first.objective - first.gap * first.objective.abs().max(1.0);
    let mut params = first.params.clone();
    let mut value = first.objective;
    let mut trace = vec![value];
    let mut nodes = first.nodes_explored;
    let mut degenerate = first.degenerate;
    for _ in 0..cfg.max_outer_iter {
        let remaining = budget - start.elapsed().as_secs_f64();
        if remaining <= 0.0 {
            break;
        }
        let step_cfg = solver.with_time_limit(cfg.max_time_2.min(remaining));
        let (gamma, _, _) = match gamma_step(ds, factors, space, &params.beta, &params.delta, restriction, Some(&params.gamma), &step_cfg) {
            Ok(v) => v,
            Err(Error::Solver(_)) => break,
            Err(e) => return Err(e),
        };
        let trial = ParamVector::new(params.beta.clone(), params.delta.clone(), gamma.clone())?;
        let s_new = ssr(ds, &trial, factors)?;
        if s_new >= value {
            break;
        }
        let d = regime_indicator(factors, &gamma)?;
        let (alpha, s_alpha, deg) = fit_alpha_box(&ds.x, &ds.y, &d, space);
        let next = ParamVector::from_alpha(&alpha, gamma)?;
        // Guard the descent property against rounding in the refit.
        let (next, s_next) = if s_alpha <= s_new { (next, s_alpha) } else { (trial, s_new) };
        params = next;
        value = s_next;
        degenerate = deg;
        trace.push(value);
        nodes += 1;
    }
    let d = regime_indicator(factors, &params.gamma)?;
    let gap = ((value - lower) / value.abs().max(1.0)).max(0.0);
    Ok(EstimationResult {
        params,
        objective: value,
        d,
        gap,
        status: if gap <= solver.gap_tol { Status::Optimal } else { Status::TimeLimit },
        wall_time: start.elapsed().as_secs_f64(),
        trace,
        degenerate,
        nodes_explored: nodes,
    })
}
