//! C ABI.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every fallible call returns a [`TrStatus`] and
//! leaves a message for [`tr_last_error`] on failure. Matrices are row-major.
//!
//! Data follow the CLI convention: `x` holds the non-constant regressors (the
//! intercept is added) and `f` holds the factors without the constant (the
//! `−1` column is added).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use tworegime::cli::SpaceSpec;
use tworegime::error::Error;
use tworegime::estimator::{estimate, Backend, BcdConfig, MiqpForm};
use tworegime::inference::{bootstrap_lr, linearity_test, BootstrapConfig, FactorSource, HypothesisSpec, LinearityConfig};
use tworegime::model::{with_constant, Dataset, EstimationResult, Status};
use tworegime::optim::SolverConfig;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Dimension = 3,
    Infeasible = 4,
    Solver = 5,
    Config = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Which vector [`tr_result_copy`] returns.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrVector {
    Beta = 0,
    Delta = 1,
    Gamma = 2,
    /// Regime indicators as 0.0 or 1.0.
    Regimes = 3,
}

/// Opaque data set.
pub struct TrDataset {
    ds: Dataset,
    factors: DMatrix<f64>,
}

/// Opaque estimation result.
pub struct TrResult {
    inner: EstimationResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code_of(e: &Error) -> TrStatus {
    match e {
        Error::Dimension(_) => TrStatus::Dimension,
        Error::Infeasible(_) => TrStatus::Infeasible,
        Error::Solver(_) => TrStatus::Solver,
        Error::Config { .. } | Error::Json(_) => TrStatus::Config,
        _ => TrStatus::InvalidInput,
    }
}

fn fail(code: TrStatus, msg: &str) -> TrStatus {
    set_error(msg);
    code
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), TrStatus>) -> TrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TrStatus::Ok
        }
        Ok(Err(code)) => code,
        Err(_) => fail(TrStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: tworegime::error::Result<T>) -> Result<T, TrStatus> {
    r.map_err(|e| fail(code_of(&e), &e.to_string()))
}

fn options<T: for<'de> Deserialize<'de> + Default>(json: *const c_char) -> Result<T, TrStatus> {
    if json.is_null() {
        return Ok(T::default());
    }
    // SAFETY: non-null, and the caller promises a NUL-terminated string.
    let text = unsafe { CStr::from_ptr(json) }.to_str().map_err(|_| fail(TrStatus::Config, "options are not UTF-8"))?;
    serde_json::from_str(text).map_err(|e| fail(TrStatus::Config, &e.to_string()))
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], TrStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(TrStatus::NullPointer, &format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn dataset<'a>(ds: *const TrDataset) -> Result<&'a TrDataset, TrStatus> {
    // SAFETY: handles come from `tr_dataset_new` and are live until freed.
    unsafe { ds.as_ref() }.ok_or_else(|| fail(TrStatus::NullPointer, "dataset handle is null"))
}

fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, TrStatus> {
    // SAFETY: the caller passes a writable location or null.
    unsafe { p.as_mut() }.ok_or_else(|| fail(TrStatus::NullPointer, "output pointer is null"))
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a data set from `y` (length `t`), `x` (`t×dx`, may be null when
/// `dx = 0`) and `f` (`t×k`, `k ≥ 1`).
///
/// # Safety
/// Each pointer must be null or reference the stated number of values.
#[no_mangle]
pub unsafe extern "C" fn tr_dataset_new(
    y: *const f64,
    t: usize,
    x: *const f64,
    dx: usize,
    f: *const f64,
    k: usize,
    out: *mut *mut TrDataset,
) -> TrStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        if t == 0 || k == 0 {
            return Err(fail(TrStatus::Dimension, "need t > 0 and at least one factor"));
        }
        let y = slice(y, t, "y")?;
        let xs = slice(x, t * dx, "x")?;
        let fs = slice(f, t * k, "f")?;
        let x = DMatrix::from_fn(t, dx + 1, |r, c| if c == 0 { 1.0 } else { xs[r * dx + c - 1] });
        let factors = with_constant(&DMatrix::from_row_slice(t, k, fs));
        let ds = lift(Dataset::new(DVector::from_column_slice(y), x, Some(factors.clone()), None))?;
        *out = Box::into_raw(Box::new(TrDataset { ds, factors }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`tr_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_dataset_free(ds: *mut TrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EstimateOptions {
    space: SpaceSpec,
    backend: Backend,
    form: MiqpForm,
    solver: SolverConfig,
    bcd: BcdConfig,
}

/// Least-squares fit. `options_json` may be null for defaults; keys are
/// `space`, `backend`, `form`, `solver` and `bcd` as in the CLI config.
///
/// # Safety
/// `ds` must be a live handle; `options_json` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tr_estimate(ds: *const TrDataset, options_json: *const c_char, out: *mut *mut TrResult) -> TrStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let d = dataset(ds)?;
        let o: EstimateOptions = options(options_json)?;
        let space = lift(o.space.build(&d.ds, d.factors.ncols()))?;
        let r = lift(estimate(&d.ds, &d.factors, &space, o.backend, o.form, &o.solver, &o.bcd))?;
        *out = Box::into_raw(Box::new(TrResult { inner: r }));
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a handle from [`tr_estimate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_result_free(res: *mut TrResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

fn result<'a>(res: *const TrResult) -> Result<&'a EstimationResult, TrStatus> {
    // SAFETY: handles come from `tr_estimate` and are live until freed.
    unsafe { res.as_ref() }.map(|r| &r.inner).ok_or_else(|| fail(TrStatus::NullPointer, "result handle is null"))
}

/// Mean squared residual of the fit.
///
/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tr_result_objective(res: *const TrResult, out: *mut f64) -> TrStatus {
    guard(|| {
        *out_ptr(out)? = result(res)?.objective;
        Ok(())
    })
}

/// Solver status: 0 optimal, 1 time limit reached, 2 infeasible.
///
/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tr_result_status(res: *const TrResult, out: *mut i32) -> TrStatus {
    guard(|| {
        *out_ptr(out)? = match result(res)?.status {
            Status::Optimal => 0,
            Status::TimeLimit => 1,
            Status::Infeasible => 2,
        };
        Ok(())
    })
}

/// Copies one vector into `buf`. `needed` receives its length; a null `buf`
/// or a short `cap` returns `BufferTooSmall` without copying.
///
/// # Safety
/// `res` must be a live handle, `needed` writable and `buf` null or writable for `cap` values.
#[no_mangle]
pub unsafe extern "C" fn tr_result_copy(res: *const TrResult, which: TrVector, buf: *mut f64, cap: usize, needed: *mut usize) -> TrStatus {
    guard(|| {
        let r = result(res)?;
        let v: Vec<f64> = match which {
            TrVector::Beta => r.params.beta.clone(),
            TrVector::Delta => r.params.delta.clone(),
            TrVector::Gamma => r.params.gamma.clone(),
            TrVector::Regimes => r.d.iter().map(|&v| f64::from(v)).collect(),
        };
        *out_ptr(needed)? = v.len();
        if buf.is_null() || cap < v.len() {
            return Err(fail(TrStatus::BufferTooSmall, &format!("need room for {} values", v.len())));
        }
        std::slice::from_raw_parts_mut(buf, v.len()).copy_from_slice(&v);
        Ok(())
    })
}

/// The full result as JSON; free with [`tr_string_free`].
///
/// # Safety
/// `res` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tr_result_to_json(res: *const TrResult, out: *mut *mut c_char) -> TrStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let text = lift(serde_json::to_string(result(res)?).map_err(Error::from))?;
        *out = CString::new(text).map_err(|_| fail(TrStatus::InvalidInput, "result contains NUL"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn tr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BootstrapOptions {
    space: SpaceSpec,
    hypothesis: Option<HypothesisSpec>,
    bootstrap: BootstrapConfig,
    solver: SolverConfig,
}

/// Bootstrap LR test with the data set's factors held fixed. The default
/// hypothesis is a zero coefficient on the second factor column.
///
/// # Safety
/// `ds` must be a live handle, `options_json` null or NUL-terminated, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn tr_bootstrap_lr(ds: *const TrDataset, options_json: *const c_char, lr: *mut f64, p_value: *mut f64) -> TrStatus {
    guard(|| {
        let d = dataset(ds)?;
        let o: BootstrapOptions = options(options_json)?;
        let (lr, p_value) = (out_ptr(lr)?, out_ptr(p_value)?);
        let df = d.factors.ncols();
        let space = lift(o.space.build(&d.ds, df))?;
        let h = o.hypothesis.unwrap_or_else(|| HypothesisSpec::zero(df, 0));
        let r = lift(bootstrap_lr(&d.ds, FactorSource::Observed(&d.factors), &space, &h, &o.bootstrap, &o.solver))?;
        *lr = r.lr;
        *p_value = r.p_value;
        Ok(())
    })
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LinearityOptions {
    space: SpaceSpec,
    linearity: LinearityConfig,
    solver: SolverConfig,
}

/// Sup-Q test of no threshold effect.
///
/// # Safety
/// `ds` must be a live handle, `options_json` null or NUL-terminated, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn tr_linearity_test(ds: *const TrDataset, options_json: *const c_char, stat: *mut f64, p_value: *mut f64) -> TrStatus {
    guard(|| {
        let d = dataset(ds)?;
        let o: LinearityOptions = options(options_json)?;
        let (stat, p_value) = (out_ptr(stat)?, out_ptr(p_value)?);
        let space = lift(o.space.build(&d.ds, d.factors.ncols()))?;
        let r = lift(linearity_test(&d.ds, &d.factors, &space, &o.linearity, &o.solver))?;
        *stat = r.stat;
        *p_value = r.p_value;
        Ok(())
    })
}
