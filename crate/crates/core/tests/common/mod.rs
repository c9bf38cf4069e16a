//! Random instances, independent oracles and the per-module invariant
//! checks shared by the property suite and the acceptance run.
#![allow(dead_code)]

pub mod invariants;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tworegime::model::{build_design, ols, Dataset, SearchSpace};
use tworegime::optim::{Csc, MioProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform regressors and factors, a noisy threshold outcome and a box wide
/// enough that per-cell OLS is interior.
pub fn instance(t: usize, dx: usize, df: usize, seed: u64) -> (Dataset, DMatrix<f64>, SearchSpace) {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(t, dx, |_, c| if c == 0 { 1.0 } else { r.random::<f64>() * 2.0 - 1.0 });
    let f = DMatrix::from_fn(t, df, |_, c| if c == df - 1 { -1.0 } else { r.random::<f64>() * 2.0 - 1.0 });
    let g2: Vec<f64> = (0..df - 1).map(|_| r.random::<f64>() - 0.5).collect();
    let y = DVector::from_fn(t, |i, _| {
        let idx = f[(i, 0)] + (1..df).map(|c| f[(i, c)] * g2[c - 1]).sum::<f64>();
        let xs: f64 = (0..dx).map(|c| x[(i, c)]).sum();
        xs + if idx > 0.0 { 1.5 * xs } else { 0.0 } + 0.3 * normal(&mut r)
    });
    let ds = Dataset::new(y, x, Some(f.clone()), None).unwrap();
    let space = SearchSpace::new(vec![-1e3; 2 * dx], vec![1e3; 2 * dx], vec![-2.0; df - 1], vec![2.0; df - 1], 0.1, 0.9, 1e-9).unwrap();
    (ds, f, space)
}

/// Scalar-index oracle for `f = (f₁, −1)`: every admissible pattern is
/// `1{f₁ > c}` for `c` at the box edge or at a sample value inside the box,
/// fitted by unconstrained OLS. Returns the mean squared residual and the
/// best pattern.
pub fn scalar_threshold_oracle(ds: &Dataset, f: &DMatrix<f64>, space: &SearchSpace) -> (f64, Vec<u8>) {
    assert_eq!(f.ncols(), 2);
    let t = ds.t();
    let (lo, hi) = (space.gamma2_lo[0], space.gamma2_hi[0]);
    let mut cuts: Vec<f64> = (0..t).map(|i| f[(i, 0)]).filter(|&v| v >= lo && v <= hi).collect();
    cuts.push(lo);
    let mut best = (f64::INFINITY, Vec::new());
    for c in cuts {
        let d: Vec<u8> = (0..t).map(|i| u8::from(f[(i, 0)] > c)).collect();
        if !space.share_ok(d.iter().map(|&v| v as usize).sum(), t) {
            continue;
        }
        let z = build_design(&ds.x, &d).unwrap();
        let a = ols(&z, &ds.y).coef;
        let s = (&ds.y - z * a).norm_squared() / t as f64;
        if s < best.0 {
            best = (s, d);
        }
    }
    best
}

/// Random convex MIQP with `nb` binaries followed by `nc` continuous
/// variables in `[−2, 2]`, and up to three general rows. Also returns the
/// random integral point the rows are built around, which is feasible.
pub fn random_miqp(nb: usize, nc: usize, seed: u64) -> (MioProblem, Vec<f64>) {
    let mut r = rng(seed);
    let n = nb + nc;
    let m = DMatrix::from_fn(n, n, |_, _| normal(&mut r));
    let q = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
    let mut trip = Vec::new();
    for j in 0..n {
        for i in 0..=j {
            trip.push((i, j, q[(i, j)]));
        }
    }
    let c: Vec<f64> = (0..n).map(|_| 2.0 * normal(&mut r)).collect();
    let x0: Vec<f64> = (0..n).map(|j| if j < nb { f64::from(r.random::<bool>() as u8) } else { r.random::<f64>() * 4.0 - 2.0 }).collect();
    let rows = r.random_range(0..=3);
    let mut a = Vec::new();
    let (mut b_lo, mut b_hi) = (Vec::new(), Vec::new());
    for i in 0..rows {
        let coef: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let ax: f64 = coef.iter().zip(&x0).map(|(p, q)| p * q).sum();
        for (j, &v) in coef.iter().enumerate() {
            a.push((i, j, v));
        }
        b_hi.push(ax + r.random::<f64>());
        b_lo.push(if r.random::<bool>() { f64::NEG_INFINITY } else { ax - r.random::<f64>() });
    }
    let p = MioProblem {
        q: Csc::from_triplets(n, n, &trip),
        c,
        offset: r.random::<f64>(),
        a: Csc::from_triplets(rows, n, &a),
        b_lo,
        b_hi,
        x_lo: (0..n).map(|j| if j < nb { 0.0 } else { -2.0 }).collect(),
        x_hi: (0..n).map(|j| if j < nb { 1.0 } else { 2.0 }).collect(),
        binary_idx: (0..nb).collect(),
    };
    (p, x0)
}

/// Exact minimum of a convex MIQP whose binaries come first: every binary
/// fixing, and for each one every active set of at most `nc` constraints
/// solved through its KKT system.
pub fn brute_force_miqp(p: &MioProblem) -> Option<f64> {
    let nb = p.binary_idx.len();
    let n = p.n();
    let nc = n - nb;
    let q = {
        let u = p.q.to_dense();
        &u + u.transpose() - DMatrix::from_diagonal(&u.diagonal())
    };
    let a = p.a.to_dense();
    // Constraint list on the continuous block: (row coefficients, rhs) for `g·z = rhs`.
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << nb) {
        let b: Vec<f64> = (0..nb).map(|j| f64::from((mask >> j) & 1)).collect();
        let mut cons: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut sides: Vec<(Vec<f64>, f64, f64)> = Vec::new();
        for i in 0..p.m() {
            let g: Vec<f64> = (nb..n).map(|j| a[(i, j)]).collect();
            let shift: f64 = (0..nb).map(|j| a[(i, j)] * b[j]).sum();
            sides.push((g, p.b_lo[i] - shift, p.b_hi[i] - shift));
        }
        for k in 0..nc {
            let mut g = vec![0.0; nc];
            g[k] = 1.0;
            sides.push((g, p.x_lo[nb + k], p.x_hi[nb + k]));
        }
        for (g, lo, hi) in &sides {
            if lo.is_finite() {
                cons.push((g.clone(), *lo));
            }
            if hi.is_finite() {
                cons.push((g.clone(), *hi));
            }
        }
        let feasible = |z: &[f64]| {
            sides.iter().all(|(g, lo, hi)| {
                let v: f64 = g.iter().zip(z).map(|(a, b)| a * b).sum();
                v >= lo - 1e-9 && v <= hi + 1e-9
            })
        };
        let qzz = q.view((nb, nb), (nc, nc)).into_owned();
        let bvec = DVector::from_column_slice(&b);
        let lin = DVector::from_fn(nc, |k, _| p.c[nb + k]) + q.view((nb, 0), (nc, nb)) * &bvec;
        let fixed = 0.5 * (bvec.transpose() * q.view((0, 0), (nb, nb)) * &bvec)[(0, 0)] + (0..nb).map(|j| p.c[j] * b[j]).sum::<f64>() + p.offset;
        for set in active_sets(cons.len(), nc) {
            let s = set.len();
            let mut kkt = DMatrix::zeros(nc + s, nc + s);
            let mut rhs = DVector::zeros(nc + s);
            kkt.view_mut((0, 0), (nc, nc)).copy_from(&qzz);
            for k in 0..nc {
                rhs[k] = -lin[k];
            }
            for (row, &ci) in set.iter().enumerate() {
                for k in 0..nc {
                    kkt[(nc + row, k)] = cons[ci].0[k];
                    kkt[(k, nc + row)] = cons[ci].0[k];
                }
                rhs[nc + row] = cons[ci].1;
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            let z: Vec<f64> = (0..nc).map(|k| sol[k]).collect();
            if !feasible(&z) {
                continue;
            }
            let zv = DVector::from_column_slice(&z);
            let obj = fixed + 0.5 * (zv.transpose() * &qzz * &zv)[(0, 0)] + lin.dot(&zv);
            if best.is_none_or(|v| obj < v) {
                best = Some(obj);
            }
        }
    }
    best
}

fn active_sets(m: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&l: &usize| l + 1);
            for i in start..m {
                let mut t = s.clone();
                t.push(i);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Noiseless rank-`k` panel `G Λ'` with Gaussian factors and loadings.
pub fn rank_k_panel(t: usize, n: usize, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let g = DMatrix::from_fn(t, k, |_, _| normal(&mut r));
    let lam = DMatrix::from_fn(n, k, |_, _| normal(&mut r));
    (&g * lam.transpose(), g, lam)
}
