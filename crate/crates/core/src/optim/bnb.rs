//! Best-first branch and bound over the binary variables of a [`MioProblem`].
//!
//! Node bounds come from the dual of the operator-splitting relaxation, so a
//! node is only pruned on a valid lower bound even when the relaxation has not
//! fully converged. Before each relaxation the node's fixings are propagated
//! through the linear rows (activity bounds with integer rounding); nodes whose
//! binaries end up fully fixed are handed to [`BnbHooks::complete`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::admm::{AdmmSettings, AdmmSolver, RelaxStatus, Relaxation};
use super::problem::{MioProblem, MioSolution, SolverConfig};
use super::sparse::Csc;
use crate::error::Result;
use crate::model::Status;

const INT_TOL: f64 = 1e-6;
const FEAS_TOL: f64 = 1e-6;
const REFINE_TOL: f64 = 1e-12;

/// Result of solving the continuous part once every binary is fixed.
#[derive(Debug, Clone)]
pub enum Completion {
    Feasible { x: Vec<f64>, objective: f64 },
    Infeasible,
    /// Fall back to solving the continuous relaxation.
    Unknown,
}

/// Problem-specific shortcuts. The defaults make the search fully generic.
pub trait BnbHooks {
    /// Called with node bounds in which every binary is fixed.
    fn complete(&mut self, _p: &MioProblem, _lo: &[f64], _hi: &[f64]) -> Completion {
        Completion::Unknown
    }

    /// Proposes a feasible point from a relaxation solution.
    fn heuristic(&mut self, _p: &MioProblem, _x_relax: &[f64], _lo: &[f64], _hi: &[f64]) -> Option<(Vec<f64>, f64)> {
        None
    }
}

pub struct NoHooks;
impl BnbHooks for NoHooks {}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixes: Vec<(usize, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the maximum: smallest bound, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Branch and bound without problem-specific hooks.
pub fn branch_and_bound(p: &MioProblem, cfg: &SolverConfig, warm_start: Option<&[f64]>) -> Result<MioSolution> {
    branch_and_bound_with(p, cfg, warm_start, &mut NoHooks)
}

pub fn branch_and_bound_with(
    p: &MioProblem,
    cfg: &SolverConfig,
    warm_start: Option<&[f64]>,
    hooks: &mut dyn BnbHooks,
) -> Result<MioSolution> {
    p.validate()?;
    cfg.validate()?;
    let mut search = Search::new(p, cfg)?;
    search.run(warm_start, hooks)
}

struct Search<'a> {
    p: &'a MioProblem,
    cfg: &'a SolverConfig,
    rows: Csc,
    is_bin: Vec<bool>,
    solver: AdmmSolver,
    deadline: Instant,
    best_x: Option<Vec<f64>>,
    best: f64,
    pruned_min: f64,
    seq: usize,
    warm: bool,
}

impl<'a> Search<'a> {
    fn new(p: &'a MioProblem, cfg: &'a SolverConfig) -> Result<Self> {
        let settings = AdmmSettings {
            eps_abs: cfg.relaxation_tol,
            eps_rel: cfg.relaxation_tol,
            max_iter: cfg.relaxation_max_iter,
            ..AdmmSettings::default()
        };
        let solver = AdmmSolver::new(p, settings)?;
        let t: Vec<_> = p.a.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        let rows = Csc::from_triplets(p.n(), p.m(), &t);
        let mut is_bin = vec![false; p.n()];
        for &j in &p.binary_idx {
            is_bin[j] = true;
        }
        let start = Instant::now();
        let deadline = start + Duration::from_secs_f64(cfg.time_limit.min(1e9));
        Ok(Self {
            p,
            cfg,
            rows,
            is_bin,
            solver,
            deadline,
            best_x: None,
            best: f64::INFINITY,
            pruned_min: f64::INFINITY,
            seq: 0,
            warm: false,
        })
    }

    fn prune_level(&self) -> f64 {
        self.best - self.cfg.gap_tol * self.best.abs().max(1.0)
    }

    fn offer(&mut self, mut x: Vec<f64>, objective: f64) {
        if objective < self.best {
            for &j in &self.p.binary_idx {
                x[j] = x[j].round();
            }
            self.best = objective;
            self.best_x = Some(x);
        }
    }

    fn run(&mut self, warm_start: Option<&[f64]>, hooks: &mut dyn BnbHooks) -> Result<MioSolution> {
        let p = self.p;
        if let Some(w) = warm_start {
            if w.len() == p.n() && p.max_violation(w) <= FEAS_TOL && p.integral(w, INT_TOL) {
                self.offer(w.to_vec(), p.objective(w));
                let (mut lo, mut hi) = (p.x_lo.clone(), p.x_hi.clone());
                for &j in &p.binary_idx {
                    lo[j] = w[j].round();
                    hi[j] = lo[j];
                }
                if let Completion::Feasible { x, objective } = hooks.complete(p, &lo, &hi) {
                    self.offer(x, objective);
                }
            }
        }

        let mut heap = BinaryHeap::new();
        heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, seq: 0, fixes: Vec::new() });
        let mut nodes = 0usize;
        let mut limit_hit = false;
        let mut root_infeasible = false;
        while let Some(node) = heap.pop() {
            if node.bound >= self.prune_level() {
                self.pruned_min = self.pruned_min.min(node.bound);
                continue;
            }
            if nodes >= self.cfg.node_limit || Instant::now() >= self.deadline {
                heap.push(node);
                limit_hit = true;
                break;
            }
            nodes += 1;
            let (mut lo, mut hi) = (p.x_lo.clone(), p.x_hi.clone());
            for &(j, v) in &node.fixes {
                let b = if v { 1.0 } else { 0.0 };
                lo[j] = b;
                hi[j] = b;
            }
            if !propagate(p, &self.rows, &self.is_bin, &mut lo, &mut hi) {
                continue;
            }
            let all_fixed = p.binary_idx.iter().all(|&j| lo[j] == hi[j]);
            if all_fixed {
                match hooks.complete(p, &lo, &hi) {
                    Completion::Feasible { x, objective } => {
                        self.offer(x, objective);
                        continue;
                    }
                    Completion::Infeasible => continue,
                    Completion::Unknown => {}
                }
            }
            let relax = self.relax(&lo, &hi)?;
            if relax.status == RelaxStatus::PrimalInfeasible {
                if node.depth == 0 {
                    root_infeasible = true;
                }
                continue;
            }
            let (l, u) = AdmmSolver::stacked_bounds(p, &lo, &hi);
            let dual = self.solver.dual_bound(&relax.x, &relax.y, &l, &u);
            let bound = node.bound.max(dual);

            let feasible_relax = p_violation(p, &relax.x, &lo, &hi) <= FEAS_TOL;
            if all_fixed {
                if feasible_relax {
                    self.offer(relax.x.clone(), relax.objective);
                } else if bound < self.prune_level() {
                    // Unresolved leaf: only its bound is known.
                    self.pruned_min = self.pruned_min.min(bound);
                }
                continue;
            }
            if let Some((x, objective)) = hooks.heuristic(p, &relax.x, &lo, &hi) {
                self.offer(x, objective);
            } else {
                self.rounding(&relax, &lo, &hi, hooks)?;
            }
            if feasible_relax && p.integral(&relax.x, INT_TOL) {
                self.offer(relax.x.clone(), relax.objective);
            }
            if bound >= self.prune_level() {
                self.pruned_min = self.pruned_min.min(bound);
                continue;
            }
            // Most fractional free binary, lowest index on ties.
            let mut pick = None;
            let mut best_frac = -1.0;
            for &j in &p.binary_idx {
                if lo[j] == hi[j] {
                    continue;
                }
                let v = relax.x[j].clamp(0.0, 1.0);
                let frac = 0.5 - (v - 0.5).abs();
                if frac > best_frac + 1e-12 {
                    best_frac = frac;
                    pick = Some(j);
                }
            }
            let j = pick.expect("a free binary exists when not all are fixed");
            let mut propagated: Vec<(usize, bool)> = Vec::new();
            for &k in &p.binary_idx {
                if lo[k] == hi[k] {
                    propagated.push((k, lo[k] == 1.0));
                }
            }
            for v in [false, true] {
                let mut fixes = propagated.clone();
                fixes.push((j, v));
                self.seq += 1;
                heap.push(Node { bound, depth: node.depth + 1, seq: self.seq, fixes });
            }
        }

        let open_min = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        let Some(x) = self.best_x.clone() else {
            let status = if limit_hit && !root_infeasible { Status::TimeLimit } else { Status::Infeasible };
            return Ok(MioSolution {
                x: Vec::new(),
                objective: f64::INFINITY,
                bound: open_min.min(self.pruned_min),
                gap: f64::INFINITY,
                status,
                nodes_explored: nodes,
            });
        };
        let x = self.refine(x)?;
        let bound = self.best.min(open_min).min(self.pruned_min);
        let gap = ((self.best - bound) / self.best.abs().max(1.0)).max(0.0);
        let status = if gap <= self.cfg.gap_tol { Status::Optimal } else { Status::TimeLimit };
        Ok(MioSolution { x, objective: self.best, bound, gap, status, nodes_explored: nodes })
    }

    /// Incumbents taken from relaxations carry the splitting tolerance in
    /// their constraint residual. One cold, tight solve with the binaries
    /// fixed usually lands the polish on the exact active set.
    fn refine(&mut self, x: Vec<f64>) -> Result<Vec<f64>> {
        let p = self.p;
        let viol = p.max_violation(&x);
        if viol <= REFINE_TOL {
            return Ok(x);
        }
        let (mut lo, mut hi) = (p.x_lo.clone(), p.x_hi.clone());
        for &j in &p.binary_idx {
            lo[j] = x[j];
            hi[j] = x[j];
        }
        let settings = AdmmSettings { eps_abs: 1e-10, eps_rel: 1e-10, max_iter: self.cfg.relaxation_max_iter, ..AdmmSettings::default() };
        let mut solver = AdmmSolver::new(p, settings)?;
        let (l, u) = AdmmSolver::stacked_bounds(p, &lo, &hi);
        let r = solver.solve(&l, &u, false, Some(self.deadline.max(Instant::now() + Duration::from_secs(1))))?;
        if r.status == RelaxStatus::PrimalInfeasible || p.max_violation(&r.x) >= viol {
            return Ok(x);
        }
        let mut y = r.x;
        for &j in &p.binary_idx {
            y[j] = x[j];
        }
        self.best = p.objective(&y);
        Ok(y)
    }

    fn relax(&mut self, lo: &[f64], hi: &[f64]) -> Result<Relaxation> {
        let (l, u) = AdmmSolver::stacked_bounds(self.p, lo, hi);
        let r = self.solver.solve(&l, &u, self.warm, Some(self.deadline))?;
        self.warm = true;
        Ok(r)
    }

    /// Rounds the relaxation binaries and solves the remaining continuous problem.
    fn rounding(&mut self, relax: &Relaxation, lo: &[f64], hi: &[f64], hooks: &mut dyn BnbHooks) -> Result<()> {
        let p = self.p;
        let (mut rlo, mut rhi) = (lo.to_vec(), hi.to_vec());
        for &j in &p.binary_idx {
            let v = relax.x[j].round().clamp(lo[j], hi[j]);
            rlo[j] = v;
            rhi[j] = v;
        }
        if !propagate(p, &self.rows, &self.is_bin, &mut rlo, &mut rhi) {
            return Ok(());
        }
        match hooks.complete(p, &rlo, &rhi) {
            Completion::Feasible { x, objective } => self.offer(x, objective),
            Completion::Infeasible => {}
            Completion::Unknown => {
                let r = self.relax(&rlo, &rhi)?;
                if r.status != RelaxStatus::PrimalInfeasible && p_violation(p, &r.x, &rlo, &rhi) <= FEAS_TOL {
                    self.offer(r.x, r.objective);
                }
            }
        }
        Ok(())
    }
}

fn p_violation(p: &MioProblem, x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut v = p.max_violation(x);
    for j in 0..x.len() {
        v = v.max(lo[j] - x[j]).max(x[j] - hi[j]);
    }
    v
}

/// Activity-based bound tightening. Returns false when the bounds become inconsistent.
pub(crate) fn propagate(p: &MioProblem, rows: &Csc, is_bin: &[bool], lo: &mut [f64], hi: &mut [f64]) -> bool {
    let m = p.m();
    for _pass in 0..25 {
        let mut changed = false;
        for i in 0..m {
            let range = rows.colptr[i]..rows.colptr[i + 1];
            let (mut amin, mut amax) = (0.0, 0.0);
            let (mut ninf_min, mut ninf_max) = (0usize, 0usize);
            for k in range.clone() {
                let (j, a) = (rows.rowval[k], rows.nzval[k]);
                let (cmin, cmax) = if a > 0.0 { (a * lo[j], a * hi[j]) } else { (a * hi[j], a * lo[j]) };
                if cmin.is_finite() {
                    amin += cmin;
                } else {
                    ninf_min += 1;
                }
                if cmax.is_finite() {
                    amax += cmax;
                } else {
                    ninf_max += 1;
                }
            }
            let (bl, bu) = (p.b_lo[i], p.b_hi[i]);
            let scale = 1.0 + bl.abs().min(bu.abs()).min(1e12);
            if ninf_min == 0 && amin > bu + 1e-9 * (scale + amin.abs()) {
                return false;
            }
            if ninf_max == 0 && amax < bl - 1e-9 * (scale + amax.abs()) {
                return false;
            }
            for k in range {
                let (j, a) = (rows.rowval[k], rows.nzval[k]);
                if a == 0.0 {
                    continue;
                }
                let (cmin, cmax) = if a > 0.0 { (a * lo[j], a * hi[j]) } else { (a * hi[j], a * lo[j]) };
                let mut new_lo = lo[j];
                let mut new_hi = hi[j];
                // Upper row bound against the minimum activity of the others.
                if bu.is_finite() {
                    let rest = if cmin.is_finite() {
                        if ninf_min == 0 { Some(amin - cmin) } else { None }
                    } else if ninf_min == 1 {
                        Some(amin)
                    } else {
                        None
                    };
                    if let Some(rest) = rest {
                        let lim = (bu - rest) / a;
                        if a > 0.0 {
                            new_hi = new_hi.min(lim);
                        } else {
                            new_lo = new_lo.max(lim);
                        }
                    }
                }
                if bl.is_finite() {
                    let rest = if cmax.is_finite() {
                        if ninf_max == 0 { Some(amax - cmax) } else { None }
                    } else if ninf_max == 1 {
                        Some(amax)
                    } else {
                        None
                    };
                    if let Some(rest) = rest {
                        let lim = (bl - rest) / a;
                        if a > 0.0 {
                            new_lo = new_lo.max(lim);
                        } else {
                            new_hi = new_hi.min(lim);
                        }
                    }
                }
                if is_bin[j] {
                    if new_hi < 1.0 - 1e-9 && hi[j] > 0.0 {
                        if lo[j] > 0.0 {
                            return false;
                        }
                        hi[j] = 0.0;
                        changed = true;
                    }
                    if new_lo > 1e-9 && lo[j] < 1.0 {
                        if hi[j] < 1.0 {
                            return false;
                        }
                        lo[j] = 1.0;
                        changed = true;
                    }
                    continue;
                }
                // Continuous bounds are loosened slightly to stay safe under rounding.
                let slack = |v: f64| 1e-9 * (1.0 + v.abs());
                if new_hi < hi[j] - 1e-7 * (1.0 + hi[j].abs().min(1e12)) {
                    hi[j] = new_hi + slack(new_hi);
                    changed = true;
                }
                if new_lo > lo[j] + 1e-7 * (1.0 + lo[j].abs().min(1e12)) {
                    lo[j] = new_lo - slack(new_lo);
                    changed = true;
                }
                if lo[j] > hi[j] {
                    if lo[j] - hi[j] > 1e-8 * (1.0 + lo[j].abs()) {
                        return false;
                    }
                    let mid = 0.5 * (lo[j] + hi[j]);
                    lo[j] = mid;
                    hi[j] = mid;
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}
