use serde::{Deserialize, Serialize};

use super::sparse::Csc;
use crate::error::{invalid, Error, Result};
use crate::model::Status;

/// `min ½x'Qx + c'x + offset` subject to `b_lo ≤ Ax ≤ b_hi`, `x_lo ≤ x ≤ x_hi`
/// and `x_j ∈ {0,1}` for `j` in `binary_idx`.
#[derive(Debug, Clone)]
pub struct MioProblem {
    /// Upper triangle of the symmetric `Q`.
    pub q: Csc,
    pub c: Vec<f64>,
    pub offset: f64,
    pub a: Csc,
    pub b_lo: Vec<f64>,
    pub b_hi: Vec<f64>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub binary_idx: Vec<usize>,
}

impl MioProblem {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b_lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.q.nrows != n || self.q.ncols != n || self.a.ncols != n {
            return Err(Error::Dimension("objective and constraint matrices disagree on n".into()));
        }
        if self.a.nrows != self.m() || self.b_hi.len() != self.m() {
            return Err(Error::Dimension("constraint bounds disagree with A".into()));
        }
        if self.x_lo.len() != n || self.x_hi.len() != n {
            return Err(Error::Dimension("variable bounds disagree with n".into()));
        }
        if self.q.triplets().iter().any(|&(r, c, _)| r > c) {
            return Err(invalid("Q must be given by its upper triangle"));
        }
        if self.b_lo.iter().zip(&self.b_hi).any(|(l, u)| !(l <= u)) {
            return Err(invalid("b_lo must not exceed b_hi"));
        }
        if self.x_lo.iter().zip(&self.x_hi).any(|(l, u)| !(l <= u)) {
            return Err(invalid("x_lo must not exceed x_hi"));
        }
        for &j in &self.binary_idx {
            if j >= n || self.x_lo[j] < 0.0 || self.x_hi[j] > 1.0 {
                return Err(invalid(format!("binary {j} must have bounds inside [0,1]")));
            }
        }
        // Dense eigenvalue check is affordable only for small problems.
        if n <= 300 {
            let q = self.q.to_dense();
            let full = &q + q.transpose() - nalgebra::DMatrix::from_diagonal(&q.diagonal());
            let min = full.clone().symmetric_eigen().eigenvalues.min();
            if min < -1e-8 * full.amax().max(1.0) {
                return Err(invalid(format!("Q is not positive semi-definite (eigenvalue {min:.3e})")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut qx = vec![0.0; self.n()];
        self.q.sym_upper_mul_vec(x, &mut qx);
        let quad: f64 = qx.iter().zip(x).map(|(a, b)| a * b).sum();
        let lin: f64 = self.c.iter().zip(x).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.offset
    }

    /// Largest violation of the linear constraints and variable bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.m()];
        self.a.mul_vec(x, &mut ax);
        let mut worst = 0.0_f64;
        for i in 0..self.m() {
            worst = worst.max(self.b_lo[i] - ax[i]).max(ax[i] - self.b_hi[i]);
        }
        for j in 0..self.n() {
            worst = worst.max(self.x_lo[j] - x[j]).max(x[j] - self.x_hi[j]);
        }
        worst
    }

    pub fn integral(&self, x: &[f64], tol: f64) -> bool {
        self.binary_idx.iter().all(|&j| (x[j] - x[j].round()).abs() <= tol)
    }

    pub fn is_linear(&self) -> bool {
        self.q.nzval.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MioSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub status: Status,
    pub nodes_explored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Wall-clock budget in seconds.
    pub time_limit: f64,
    pub gap_tol: f64,
    pub node_limit: usize,
    pub relaxation_tol: f64,
    pub relaxation_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { time_limit: 60.0, gap_tol: 1e-6, node_limit: 1_000_000, relaxation_tol: 1e-7, relaxation_max_iter: 20_000 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit > 0.0 && self.gap_tol > 0.0 && self.relaxation_tol > 0.0) {
            return Err(invalid("solver time limit and tolerances must be positive"));
        }
        if self.node_limit == 0 || self.relaxation_max_iter == 0 {
            return Err(invalid("solver node and iteration limits must be positive"));
        }
        Ok(())
    }

    pub fn with_time_limit(mut self, secs: f64) -> Self {
        self.time_limit = secs;
        self
    }
}
