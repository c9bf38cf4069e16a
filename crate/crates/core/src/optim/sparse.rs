//! Compressed-column matrices and a sparse `LDL'` factorisation for
//! quasi-definite systems.
//!
//! The numeric factorisation follows the elimination-tree scheme of QDLDL:
//! a symbolic pass counts the nonzeros of every column of `L`, after which
//! refactoring with new values only repeats the numeric pass.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csc {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowval: Vec<usize>,
    pub nzval: Vec<f64>,
}

impl Csc {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, colptr: vec![0; ncols + 1], rowval: Vec::new(), nzval: Vec::new() }
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; ncols + 1];
        for &(r, c, _) in trip {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            count[c + 1] += 1;
        }
        for c in 0..ncols {
            count[c + 1] += count[c];
        }
        let mut next = count.clone();
        let mut rows = vec![0usize; trip.len()];
        let mut vals = vec![0.0; trip.len()];
        for &(r, c, v) in trip {
            let k = next[c];
            rows[k] = r;
            vals[k] = v;
            next[c] += 1;
        }
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(trip.len());
        let mut nzval = Vec::with_capacity(trip.len());
        let mut order: Vec<usize> = Vec::new();
        for c in 0..ncols {
            order.clear();
            order.extend(count[c]..count[c + 1]);
            order.sort_by_key(|&k| rows[k]);
            let start = rowval.len();
            for &k in &order {
                if rowval.len() > start && *rowval.last().unwrap() == rows[k] {
                    *nzval.last_mut().unwrap() += vals[k];
                } else {
                    rowval.push(rows[k]);
                    nzval.push(vals[k]);
                }
            }
            colptr[c + 1] = rowval.len();
        }
        Self { nrows, ncols, colptr, rowval, nzval }
    }

    pub fn nnz(&self) -> usize {
        self.rowval.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                out.push((self.rowval[k], c, self.nzval[k]));
            }
        }
        out
    }

    /// `out = A x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.colptr[c]..self.colptr[c + 1] {
                out[self.rowval[k]] += self.nzval[k] * xc;
            }
        }
    }

    /// `out = A' y`.
    pub fn tr_mul_vec(&self, y: &[f64], out: &mut [f64]) {
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for k in self.colptr[c]..self.colptr[c + 1] {
                acc += self.nzval[k] * y[self.rowval[k]];
            }
            out[c] = acc;
        }
    }

    /// `out = S x` where `self` holds the upper triangle of a symmetric `S`.
    pub fn sym_upper_mul_vec(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                let r = self.rowval[k];
                let v = self.nzval[k];
                out[r] += v * x[c];
                if r != c {
                    out[c] += v * x[r];
                }
            }
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Keeps only the stored upper-triangular entries (`row ≤ col`).
    pub fn upper(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().filter(|&(r, c, _)| r <= c).collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Multiplies row `i` by `d[i]` and column `j` by `e[j]`.
    pub fn scale(&mut self, d: &[f64], e: &[f64]) {
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                self.nzval[k] *= d[self.rowval[k]] * e[c];
            }
        }
    }

    /// Infinity norm of every column.
    pub fn col_inf_norms(&self) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| self.nzval[self.colptr[c]..self.colptr[c + 1]].iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect()
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0_f64; self.nrows];
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                let r = self.rowval[k];
                out[r] = out[r].max(self.nzval[k].abs());
            }
        }
        out
    }
}

const NONE: usize = usize::MAX;

/// Symbolic and numeric `P A P' = L D L'` for a symmetric matrix given by its upper triangle.
#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    perm: Vec<usize>,
    /// Upper triangle of the permuted matrix and, for every original entry,
    /// its slot there so that new values can be scattered without re-sorting.
    pa: Csc,
    slot: Vec<usize>,
    etree: Vec<usize>,
    lnz: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    work: Vec<f64>,
}

impl Ldl {
    /// Orders with AMD, runs the symbolic pass and factors numerically.
    pub fn new(a_upper: &Csc) -> Result<Self> {
        let n = a_upper.ncols;
        if a_upper.nrows != n {
            return Err(Error::Dimension("LDL needs a square matrix".into()));
        }
        let perm = if n == 0 {
            Vec::new()
        } else {
            let control = amd::Control::default();
            match amd::order::<usize>(n, &a_upper.colptr, &a_upper.rowval, &control) {
                Ok((p, _, _)) => p,
                Err(s) => return Err(Error::Solver(format!("AMD ordering failed: {s:?}"))),
            }
        };
        let mut pinv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        // Permute, keeping the upper triangle, and remember where each entry lands.
        let mut trip = Vec::with_capacity(a_upper.nnz());
        for c in 0..n {
            for k in a_upper.colptr[c]..a_upper.colptr[c + 1] {
                let (i, j) = (pinv[a_upper.rowval[k]], pinv[c]);
                trip.push((i.min(j), i.max(j), k as f64));
            }
        }
        let mut pa = Csc::from_triplets(n, n, &trip);
        if pa.nnz() != a_upper.nnz() {
            return Err(Error::Solver("duplicate entries in the matrix handed to LDL".into()));
        }
        let mut slot = vec![0usize; a_upper.nnz()];
        for (k, v) in pa.nzval.iter_mut().enumerate() {
            slot[*v as usize] = k;
        }
        for (orig, &s) in slot.iter().enumerate() {
            pa.nzval[s] = a_upper.nzval[orig];
        }
        let (etree, lnz) = etree(&pa)?;
        let total: usize = lnz.iter().sum();
        let mut f = Self {
            n,
            perm,
            pa,
            slot,
            etree,
            lnz,
            lp: vec![0; n + 1],
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            work: vec![0.0; n],
        };
        f.numeric()?;
        Ok(f)
    }

    /// Refactors with new values on the same sparsity pattern (same entry order as at construction).
    pub fn refactor(&mut self, values: &[f64]) -> Result<()> {
        for (orig, &s) in self.slot.iter().enumerate() {
            self.pa.nzval[s] = values[orig];
        }
        self.numeric()
    }

    fn numeric(&mut self) -> Result<()> {
        let n = self.n;
        let (ap, ai, ax) = (&self.pa.colptr, &self.pa.rowval, &self.pa.nzval);
        let mut marker = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space = vec![0usize; n];
        let yv = &mut self.work;
        self.lp[0] = 0;
        for i in 0..n {
            self.lp[i + 1] = self.lp[i] + self.lnz[i];
            next_space[i] = self.lp[i];
            yv[i] = 0.0;
            self.d[i] = 0.0;
        }
        for k in 0..n {
            let mut nnz_y = 0;
            for p in ap[k]..ap[k + 1] {
                let b = ai[p];
                if b == k {
                    self.d[k] = ax[p];
                    continue;
                }
                yv[b] = ax[p];
                if !marker[b] {
                    marker[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if marker[nx] {
                            break;
                        }
                        marker[nx] = true;
                        elim[ne] = nx;
                        ne += 1;
                        nx = self.etree[nx];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = yv[c];
                for j in self.lp[c]..tmp {
                    yv[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                self.lx[tmp] = yc * self.dinv[c];
                self.d[k] -= yc * self.lx[tmp];
                next_space[c] += 1;
                yv[c] = 0.0;
                marker[c] = false;
            }
            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(Error::Singular(format!("zero pivot at position {k} in LDL")));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves in place.
    pub fn solve(&mut self, b: &mut [f64]) {
        let n = self.n;
        let x = &mut self.work;
        for k in 0..n {
            x[k] = b[self.perm[k]];
        }
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }

    /// Pivots of `D`; their signs give the inertia.
    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}

fn etree(a: &Csc) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = a.ncols;
    let mut work = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    let mut tree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        let mut has_diag = false;
        for p in a.colptr[j]..a.colptr[j + 1] {
            let mut i = a.rowval[p];
            if i > j {
                return Err(Error::Solver("LDL input is not upper triangular".into()));
            }
            if i == j {
                has_diag = true;
            }
            while work[i] != j {
                if tree[i] == NONE {
                    tree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = tree[i];
            }
        }
        if !has_diag {
            return Err(Error::Solver(format!("missing diagonal entry in column {j}")));
        }
    }
    Ok((tree, lnz))
}
