//! Exact sweep over the cells of the arrangement `{g : a_t + n_t'g = 0}`
//! restricted to a box in `g`-space of dimension at most three.
//!
//! Every bounded cell has an edge, and every edge lies on a line cut out by
//! `dim − 1` of the row hyperplanes and box faces. The sweep walks each such
//! line, sorting the points where the remaining rows cross it, and visits
//! every segment once per side of the defining rows (box faces are only
//! taken on their inward side). Visitors see the regime pattern as a start
//! state plus single-row flips, so a per-cell update costs `O(1)` flips.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{dim, Error, Result};
use crate::model::SearchSpace;

pub const MAX_DIM: usize = 3;

/// Receives the cells of a sweep.
pub trait CellVisitor {
    /// Start of a line; `positive[t]` is the current state of row `t`.
    fn begin(&mut self, positive: &[bool]);
    fn flip(&mut self, t: usize, positive: bool);
    /// The current state is the sign pattern of an open cell. `witness`
    /// returns a point inside it, in full coordinates.
    fn cell(&mut self, witness: &dyn Fn() -> Vec<f64>);
}

/// Rows `a_t + n_t'g` over a box, with some coordinates optionally held fixed.
#[derive(Debug, Clone)]
pub struct Arrangement {
    t: usize,
    dim: usize,
    a: Vec<f64>,
    nrm: Vec<[f64; MAX_DIM]>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Maps free coordinates back into the full vector.
    free: Vec<usize>,
    full: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Plane {
    Row(usize),
    Face { k: usize, upper: bool },
}

impl Arrangement {
    /// Rows from a factor matrix: `a_t = F[t,0]`, `n_t = F[t,1..]`, box on `γ₂`.
    pub fn from_factors(f: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::with_fixed(f, lo, hi, &vec![None; lo.len()])
    }

    /// Same as [`Arrangement::from_factors`] with `fixed[k] = Some(v)` pinning `γ₂[k] = v`.
    /// Coordinates whose box is a single point are pinned as well.
    pub fn with_fixed(f: &DMatrix<f64>, lo: &[f64], hi: &[f64], fixed: &[Option<f64>]) -> Result<Self> {
        let (t, df) = f.shape();
        let dfull = df.checked_sub(1).ok_or_else(|| dim("factor matrix has no columns"))?;
        if lo.len() != dfull || hi.len() != dfull || fixed.len() != dfull {
            return Err(dim(format!("gamma box has {} coordinates, factors need {dfull}", lo.len())));
        }
        let mut pinned = fixed.to_vec();
        for k in 0..dfull {
            if pinned[k].is_none() && lo[k] == hi[k] {
                pinned[k] = Some(lo[k]);
            }
        }
        let free: Vec<usize> = (0..dfull).filter(|&k| pinned[k].is_none()).collect();
        if free.len() > MAX_DIM {
            return Err(Error::Unsupported(format!(
                "exact enumeration supports at most {MAX_DIM} free threshold coefficients, got {}",
                free.len()
            )));
        }
        let mut full = vec![0.0; dfull];
        for k in 0..dfull {
            if let Some(v) = pinned[k] {
                full[k] = v;
            }
        }
        let mut a = vec![0.0; t];
        let mut nrm = vec![[0.0; MAX_DIM]; t];
        for r in 0..t {
            let mut base = f[(r, 0)];
            for k in 0..dfull {
                if let Some(v) = pinned[k] {
                    base += f[(r, k + 1)] * v;
                }
            }
            a[r] = base;
            for (c, &k) in free.iter().enumerate() {
                nrm[r][c] = f[(r, k + 1)];
            }
        }
        Ok(Self {
            t,
            dim: free.len(),
            a,
            nrm,
            lo: free.iter().map(|&k| lo[k]).collect(),
            hi: free.iter().map(|&k| hi[k]).collect(),
            free,
            full,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn expand(&self, g: &[f64]) -> Vec<f64> {
        let mut out = self.full.clone();
        for (c, &k) in self.free.iter().enumerate() {
            out[k] = g[c];
        }
        out
    }

    fn plane(&self, p: Plane) -> ([f64; MAX_DIM], f64) {
        match p {
            Plane::Row(t) => (self.nrm[t], -self.a[t]),
            Plane::Face { k, upper } => {
                let mut n = [0.0; MAX_DIM];
                n[k] = 1.0;
                (n, if upper { self.hi[k] } else { self.lo[k] })
            }
        }
    }

    pub fn sweep(&self, vis: &mut dyn CellVisitor) {
        if self.dim == 0 {
            let pos: Vec<bool> = self.a.iter().map(|&v| v > 0.0).collect();
            vis.begin(&pos);
            vis.cell(&|| self.expand(&[]));
            return;
        }
        let mut buf = LineBuffers::new(self.t);
        match self.dim {
            1 => self.sweep_line(&[], vis, &mut buf),
            2 => {
                for t in 0..self.t {
                    self.sweep_line(&[Plane::Row(t)], vis, &mut buf);
                }
                for k in 0..2 {
                    for upper in [false, true] {
                        self.sweep_line(&[Plane::Face { k, upper }], vis, &mut buf);
                    }
                }
            }
            _ => {
                let mut planes: Vec<Plane> = (0..self.t).map(Plane::Row).collect();
                for k in 0..3 {
                    for upper in [false, true] {
                        planes.push(Plane::Face { k, upper });
                    }
                }
                for i in 0..planes.len() {
                    for j in (i + 1)..planes.len() {
                        if let (Plane::Face { k: a, .. }, Plane::Face { k: b, .. }) = (planes[i], planes[j]) {
                            if a == b {
                                continue;
                            }
                        }
                        self.sweep_line(&[planes[i], planes[j]], vis, &mut buf);
                    }
                }
            }
        }
    }

    fn sweep_line(&self, defs: &[Plane], vis: &mut dyn CellVisitor, buf: &mut LineBuffers) {
        let d = self.dim;
        let nd = defs.len();
        let mut nmat = [[0.0; MAX_DIM]; 2];
        let mut rhs = [0.0; 2];
        for (i, &p) in defs.iter().enumerate() {
            let (n, b) = self.plane(p);
            nmat[i] = n;
            rhs[i] = b;
        }
        // Direction u spanning the null space of the defining normals.
        let mut u = [0.0; MAX_DIM];
        match d {
            1 => u[0] = 1.0,
            2 => {
                u[0] = -nmat[0][1];
                u[1] = nmat[0][0];
            }
            _ => {
                let (x, y) = (nmat[0], nmat[1]);
                u = [x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]];
            }
        }
        let unorm = norm(&u, d);
        let nscale: f64 = (0..nd).map(|i| norm(&nmat[i], d)).product::<f64>().max(f64::MIN_POSITIVE);
        if !(unorm > 1e-12 * nscale) {
            return;
        }
        for c in u.iter_mut().take(d) {
            *c /= unorm;
        }
        // Gram inverse of the defining normals, for the minimum-norm point and offsets.
        let ginv = match nd {
            0 => [[0.0; 2]; 2],
            1 => {
                let g = dot(&nmat[0], &nmat[0], d);
                if g == 0.0 {
                    return;
                }
                [[1.0 / g, 0.0], [0.0, 0.0]]
            }
            _ => {
                let g00 = dot(&nmat[0], &nmat[0], d);
                let g01 = dot(&nmat[0], &nmat[1], d);
                let g11 = dot(&nmat[1], &nmat[1], d);
                let det = g00 * g11 - g01 * g01;
                if !(det.abs() > 1e-14 * g00 * g11) {
                    return;
                }
                [[g11 / det, -g01 / det], [-g01 / det, g00 / det]]
            }
        };
        let solve_n = |s: &[f64; 2]| -> [f64; MAX_DIM] {
            let mut w = [0.0; 2];
            for i in 0..nd {
                for j in 0..nd {
                    w[i] += ginv[i][j] * s[j];
                }
            }
            let mut out = [0.0; MAX_DIM];
            for i in 0..nd {
                for c in 0..d {
                    out[c] += nmat[i][c] * w[i];
                }
            }
            out
        };
        let p = solve_n(&rhs);

        // Clip the line to the box.
        let (mut s_lo, mut s_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..d {
            let tol = 1e-11 * (1.0 + self.lo[k].abs() + self.hi[k].abs());
            if u[k].abs() > 1e-13 {
                let a = (self.lo[k] - p[k]) / u[k];
                let b = (self.hi[k] - p[k]) / u[k];
                s_lo = s_lo.max(a.min(b));
                s_hi = s_hi.min(a.max(b));
            } else if p[k] < self.lo[k] - tol || p[k] > self.hi[k] + tol {
                return;
            }
        }
        let span_scale = 1.0 + s_lo.abs().max(s_hi.abs());
        if !(s_hi - s_lo > 1e-12 * span_scale) {
            return;
        }

        // Row values along the line: r_t(s) = r0_t + s·du_t.
        let mut is_def = [usize::MAX; 2];
        let mut n_row_defs = 0;
        for &pl in defs {
            if let Plane::Row(t) = pl {
                is_def[n_row_defs] = t;
                n_row_defs += 1;
            }
        }
        buf.breaks.clear();
        buf.zero_rows.clear();
        for t in 0..self.t {
            let n = &self.nrm[t];
            let r0 = self.a[t] + dot(n, &p, d);
            let du = dot(n, &u, d);
            buf.r0[t] = r0;
            buf.du[t] = du;
            if is_def[..n_row_defs].contains(&t) {
                continue;
            }
            let nn = norm(n, d);
            let scale = 1.0 + self.a[t].abs() + nn * norm(&p, d);
            if du.abs() <= 1e-13 * nn.max(1e-300) {
                if r0.abs() <= 1e-12 * scale {
                    buf.zero_rows.push(t);
                }
                continue;
            }
            let s = -r0 / du;
            if s > s_lo + 1e-13 * span_scale && s < s_hi - 1e-13 * span_scale {
                buf.breaks.push((s, t));
            }
        }
        buf.breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Group crossings that coincide numerically.
        buf.groups.clear();
        let mut i = 0;
        while i < buf.breaks.len() {
            let s0 = buf.breaks[i].0;
            let mut j = i + 1;
            while j < buf.breaks.len() && buf.breaks[j].0 - s0 <= 1e-12 * (1.0 + s0.abs()) {
                j += 1;
            }
            buf.groups.push((i, j));
            i = j;
        }
        let bound_at = |g: usize| -> f64 { buf.breaks[buf.groups[g].0].0 };
        let seg_end = |k: usize| if k < buf.groups.len() { bound_at(k) } else { s_hi };
        let seg_start = |k: usize| if k == 0 { s_lo } else { bound_at(k - 1) };

        let m0 = 0.5 * (seg_start(0) + seg_end(0));
        for t in 0..self.t {
            buf.pos[t] = false;
        }
        let zero_set: &[usize] = &buf.zero_rows;
        for t in 0..self.t {
            if is_def[..n_row_defs].contains(&t) || zero_set.contains(&t) {
                continue;
            }
            buf.pos[t] = buf.r0[t] + m0 * buf.du[t] > 0.0;
        }

        // Offsets into the adjacent cells, one per sign choice of the defining rows.
        let ncombo = 1usize << n_row_defs;
        let mut dirs: Vec<[f64; MAX_DIM]> = Vec::with_capacity(ncombo);
        let mut flips: Vec<Vec<usize>> = Vec::with_capacity(ncombo);
        for mask in 0..ncombo {
            let mut sigma = [0.0; 2];
            let mut r = 0;
            let mut on = Vec::new();
            for (i, &pl) in defs.iter().enumerate() {
                match pl {
                    Plane::Row(t) => {
                        let plus = mask >> r & 1 == 1;
                        sigma[i] = if plus { 1.0 } else { -1.0 };
                        if plus {
                            on.push(t);
                        }
                        r += 1;
                    }
                    Plane::Face { upper, .. } => sigma[i] = if upper { -1.0 } else { 1.0 },
                }
            }
            let v = solve_n(&sigma);
            for &t in zero_set {
                if dot(&self.nrm[t], &v, d) > 0.0 {
                    on.push(t);
                }
            }
            dirs.push(v);
            flips.push(on);
        }

        vis.begin(&buf.pos[..self.t]);
        // Gray-code order, reversed on alternate segments, so consecutive
        // cells differ in as few rows as possible.
        let gray: Vec<usize> = (0..ncombo).map(|i| i ^ (i >> 1)).collect();
        let mut on: Vec<usize> = Vec::new();
        let nseg = buf.groups.len() + 1;
        for k in 0..nseg {
            let mid = 0.5 * (seg_start(k) + seg_end(k));
            for idx in 0..ncombo {
                let c = if k % 2 == 0 { gray[idx] } else { gray[ncombo - 1 - idx] };
                for &t in &on {
                    if !flips[c].contains(&t) {
                        vis.flip(t, false);
                    }
                }
                for &t in &flips[c] {
                    if !on.contains(&t) {
                        vis.flip(t, true);
                    }
                }
                on.clear();
                on.extend_from_slice(&flips[c]);
                let v = dirs[c];
                let r0 = &buf.r0;
                let du = &buf.du;
                let witness = || -> Vec<f64> {
                    let mut q = [0.0; MAX_DIM];
                    for c in 0..d {
                        q[c] = p[c] + mid * u[c];
                    }
                    let mut eta = f64::INFINITY;
                    for t in 0..self.t {
                        if is_def[..n_row_defs].contains(&t) || zero_set.contains(&t) {
                            continue;
                        }
                        let w = dot(&self.nrm[t], &v, d);
                        if w != 0.0 {
                            eta = eta.min((r0[t] + mid * du[t]).abs() / w.abs());
                        }
                    }
                    for c in 0..d {
                        if v[c] > 0.0 {
                            eta = eta.min((self.hi[c] - q[c]) / v[c]);
                        } else if v[c] < 0.0 {
                            eta = eta.min((self.lo[c] - q[c]) / v[c]);
                        }
                    }
                    let eta = if eta.is_finite() { 0.5 * eta } else { 0.0 };
                    let g: Vec<f64> = (0..d).map(|c| (q[c] + eta * v[c]).clamp(self.lo[c], self.hi[c])).collect();
                    self.expand(&g)
                };
                vis.cell(&witness);
            }
            if k < buf.groups.len() {
                let (a, b) = buf.groups[k];
                for idx in a..b {
                    let t = buf.breaks[idx].1;
                    vis.flip(t, buf.du[t] > 0.0);
                }
            }
        }
    }
}

struct LineBuffers {
    r0: Vec<f64>,
    du: Vec<f64>,
    pos: Vec<bool>,
    breaks: Vec<(f64, usize)>,
    groups: Vec<(usize, usize)>,
    zero_rows: Vec<usize>,
}

impl LineBuffers {
    fn new(t: usize) -> Self {
        Self {
            r0: vec![0.0; t],
            du: vec![0.0; t],
            pos: vec![false; t],
            breaks: Vec::with_capacity(t),
            groups: Vec::with_capacity(t),
            zero_rows: Vec::new(),
        }
    }
}

fn dot(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM], d: usize) -> f64 {
    (0..d).map(|k| a[k] * b[k]).sum()
}

fn norm(a: &[f64; MAX_DIM], d: usize) -> f64 {
    dot(a, a, d).sqrt()
}

/// Collects distinct sign patterns together with a witness point.
struct Collector {
    words: usize,
    state: Vec<u64>,
    seen: HashSet<Vec<u64>>,
    out: Vec<(Vec<f64>, Vec<u8>)>,
    t: usize,
}

impl CellVisitor for Collector {
    fn begin(&mut self, positive: &[bool]) {
        self.state = vec![0; self.words];
        for (t, &p) in positive.iter().enumerate() {
            if p {
                self.state[t / 64] |= 1 << (t % 64);
            }
        }
    }

    fn flip(&mut self, t: usize, positive: bool) {
        if positive {
            self.state[t / 64] |= 1 << (t % 64);
        } else {
            self.state[t / 64] &= !(1 << (t % 64));
        }
    }

    fn cell(&mut self, witness: &dyn Fn() -> Vec<f64>) {
        if self.seen.contains(&self.state) {
            return;
        }
        self.seen.insert(self.state.clone());
        let g = witness();
        let d = (0..self.t).map(|t| ((self.state[t / 64] >> (t % 64)) & 1) as u8).collect();
        let mut gamma = Vec::with_capacity(g.len() + 1);
        gamma.push(1.0);
        gamma.extend(g);
        self.out.push((gamma, d));
    }
}

/// Every regime pattern `1{f_t'γ > 0}` realised by an open cell of the
/// arrangement with `γ = (1, γ₂)` and `γ₂` in the search box, each with a
/// witness `γ` (first entry 1).
pub fn enumerate_cells(f: &DMatrix<f64>, space: &SearchSpace) -> Result<Vec<(Vec<f64>, Vec<u8>)>> {
    let arr = Arrangement::from_factors(f, &space.gamma2_lo, &space.gamma2_hi)?;
    let t = f.nrows();
    let words = t.div_ceil(64).max(1);
    let mut col = Collector { words, state: vec![0; words], seen: HashSet::new(), out: Vec::new(), t };
    arr.sweep(&mut col);
    Ok(col.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::regime_indicator;
    use rand::{Rng, SeedableRng};

    fn space(lo: Vec<f64>, hi: Vec<f64>) -> SearchSpace {
        SearchSpace::new(vec![-1.0, -1.0], vec![1.0, 1.0], lo, hi, 0.05, 0.95, 1e-6).unwrap()
    }

    #[test]
    fn two_rows_three_cells() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, -1.0]);
        let mut cells = enumerate_cells(&f, &space(vec![-2.0], vec![2.0])).unwrap();
        cells.sort_by(|a, b| a.0[1].total_cmp(&b.0[1]));
        let pats: Vec<Vec<u8>> = cells.iter().map(|c| c.1.clone()).collect();
        assert_eq!(pats, vec![vec![1, 1], vec![1, 0], vec![0, 0]]);
        assert!(cells[0].0[1] < -1.0 && cells[1].0[1].abs() < 1.0 && cells[2].0[1] > 1.0);
    }

    #[test]
    fn single_row() {
        let f = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        assert_eq!(enumerate_cells(&f, &space(vec![-2.0], vec![2.0])).unwrap().len(), 2);
        assert_eq!(enumerate_cells(&f, &space(vec![1.0], vec![2.0])).unwrap().len(), 1);
    }

    #[test]
    fn witnesses_reproduce_patterns_in_three_dims() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let t = 12;
        let f = DMatrix::from_fn(t, 4, |_, c| if c == 3 { -1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
        let s = space(vec![-2.0; 3], vec![2.0; 3]);
        let cells = enumerate_cells(&f, &s).unwrap();
        let mut seen = HashSet::new();
        for (g, d) in &cells {
            assert_eq!(&regime_indicator(&f, g).unwrap(), d);
            assert!(seen.insert(d.clone()));
        }
        // Random sampling never finds a pattern outside the enumeration.
        for _ in 0..20_000 {
            let g: Vec<f64> = std::iter::once(1.0).chain((0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0)).collect();
            assert!(seen.contains(&regime_indicator(&f, &g).unwrap()));
        }
    }

    #[test]
    fn too_many_dimensions() {
        let f = DMatrix::from_element(3, 6, -1.0);
        assert!(matches!(enumerate_cells(&f, &space(vec![-1.0; 5], vec![1.0; 5])), Err(Error::Unsupported(_))));
    }
}
