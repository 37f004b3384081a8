//! C ABI over `curvelab`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` (or an
//! operation) and released by the matching `*_free`. Every fallible call
//! returns a [`CurvelabStatus`]; the message of the last failure on the
//! calling thread is available through [`curvelab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use curvelab::operators::apply_tj;
use curvelab::oscillatory::stationary_phase_normalized;
use curvelab::scales::{classify_scales_auto, verify_cardinality_bound};
use curvelab::sharpness::endpoint_scaling_experiment_with;
use curvelab::tiling::whitney_decompose;
use curvelab::{CutoffFamily, Error, ExperimentReport, GridFunction, Polynomial};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvelabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ZeroPolynomial = 3,
    LinearTerm = 4,
    HolderViolated = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Polynomial `a_1 t + ... + a_d t^d`.
pub struct CurvelabPolynomial(Polynomial);

/// Samples of a function on a uniform grid.
pub struct CurvelabGrid(GridFunction);

/// Rows, fits and flags of one experiment.
pub struct CurvelabReport(ExperimentReport);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CurvelabStatus {
    match e {
        Error::ZeroPolynomial => CurvelabStatus::ZeroPolynomial,
        Error::LinearTerm(_) => CurvelabStatus::LinearTerm,
        Error::HolderViolated => CurvelabStatus::HolderViolated,
        Error::InvalidArgument(_) | Error::Empty(_) | Error::Unbounded | Error::OutOfRange | Error::ATooSmall => {
            CurvelabStatus::InvalidArgument
        }
        _ => CurvelabStatus::Numerical,
    }
}

enum Fail {
    Null,
    Lib(Error),
    Small,
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> CurvelabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CurvelabStatus::Ok,
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument".into());
            CurvelabStatus::NullPointer
        }
        Ok(Err(Fail::Small)) => {
            set_error("output buffer too small".into());
            CurvelabStatus::BufferTooSmall
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CurvelabStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null);
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null)
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null)
}

/// Copies the last error message of this thread, NUL-terminated, into
/// `buf` and returns its length in bytes (without the NUL). Truncates when
/// `cap` is too small.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn curvelab_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds `a_1 t + ... + a_d t^d` from `len` coefficients.
///
/// # Safety
/// `coeffs` must point to `len` doubles; `out_poly` must be writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_polynomial_new(
    coeffs: *const f64,
    len: usize,
    out_poly: *mut *mut CurvelabPolynomial,
) -> CurvelabStatus {
    guard(|| {
        let a = slice_in(coeffs, len)?;
        let o = out(out_poly)?;
        let p = Polynomial::new(a);
        if p.is_zero() {
            return Err(Fail::Lib(Error::ZeroPolynomial));
        }
        *o = Box::into_raw(Box::new(CurvelabPolynomial(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`curvelab_polynomial_new`].
#[no_mangle]
pub unsafe extern "C" fn curvelab_polynomial_free(p: *mut CurvelabPolynomial) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live polynomial handle; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_polynomial_eval(p: *const CurvelabPolynomial, t: f64, value: *mut f64) -> CurvelabStatus {
    guard(|| {
        *out(value)? = handle(p)?.0.eval(t);
        Ok(())
    })
}

/// `#J_good(N)` and its bound over an automatically widened scale range.
///
/// # Safety
/// `p` must be a live polynomial handle; `count` and `bound` writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_classify(
    p: *const CurvelabPolynomial,
    n_param: i32,
    count: *mut i64,
    bound: *mut i64,
) -> CurvelabStatus {
    guard(|| {
        let p = &handle(p)?.0;
        let (c, b) = (out(count)?, out(bound)?);
        let part = classify_scales_auto(p, n_param)?;
        let check = verify_cardinality_bound(&part, p.degree())?;
        *c = check.count;
        *b = check.bound;
        Ok(())
    })
}

/// Grid function on `[lo, hi]` with `len` samples.
///
/// # Safety
/// `values` must point to `len` doubles; `out_grid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_grid_new(
    lo: f64,
    hi: f64,
    values: *const f64,
    len: usize,
    out_grid: *mut *mut CurvelabGrid,
) -> CurvelabStatus {
    guard(|| {
        let v = slice_in(values, len)?;
        let o = out(out_grid)?;
        let g = GridFunction::new(lo, hi, v.to_vec())?;
        *o = Box::into_raw(Box::new(CurvelabGrid(g)));
        Ok(())
    })
}

/// # Safety
/// `g` must be null or a grid handle.
#[no_mangle]
pub unsafe extern "C" fn curvelab_grid_free(g: *mut CurvelabGrid) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn curvelab_grid_len(g: *const CurvelabGrid) -> usize {
    g.as_ref().map_or(0, |g| g.0.n)
}

/// Copies the samples into `buf` (`cap` doubles).
///
/// # Safety
/// `g` must be a live grid handle; `buf` must point to `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn curvelab_grid_values(g: *const CurvelabGrid, buf: *mut f64, cap: usize) -> CurvelabStatus {
    guard(|| {
        let g = &handle(g)?.0;
        if buf.is_null() {
            return Err(Fail::Null);
        }
        if cap < g.n {
            return Err(Fail::Small);
        }
        ptr::copy_nonoverlapping(g.values.as_ptr(), buf, g.n);
        Ok(())
    })
}

/// Hardy–Littlewood maximal function of `g`.
///
/// # Safety
/// `g` must be a live grid handle; `out_grid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_hl_maximal(g: *const CurvelabGrid, out_grid: *mut *mut CurvelabGrid) -> CurvelabStatus {
    guard(|| {
        let g = &handle(g)?.0;
        let o = out(out_grid)?;
        *o = Box::into_raw(Box::new(CurvelabGrid(g.hl_maximal())));
        Ok(())
    })
}

/// `T_j(f, g)` on the grid of `f`.
///
/// # Safety
/// All handles must be live; `out_grid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_apply_tj(
    f: *const CurvelabGrid,
    g: *const CurvelabGrid,
    p: *const CurvelabPolynomial,
    j: i32,
    out_grid: *mut *mut CurvelabGrid,
) -> CurvelabStatus {
    guard(|| {
        let (f, g, p) = (&handle(f)?.0, &handle(g)?.0, &handle(p)?.0);
        let o = out(out_grid)?;
        let res = apply_tj(f, g, p, j, &CutoffFamily::new())?;
        *o = Box::into_raw(Box::new(CurvelabGrid(res.output)));
        Ok(())
    })
}

/// Normalized stationary-phase value at scale `m` and its limit.
///
/// # Safety
/// `value` and `limit` must be writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_stationary_phase(m: i32, xi: f64, eta: f64, value: *mut f64, limit: *mut f64) -> CurvelabStatus {
    guard(|| {
        let (v, l) = (out(value)?, out(limit)?);
        let (a, b) = stationary_phase_normalized(m, xi, eta, &CutoffFamily::new())?;
        *v = a;
        *l = b;
        Ok(())
    })
}

/// Whitney decomposition of the union of `count` open intervals given as
/// `(lo, hi)` pairs in `intervals`. Writes up to `cap` intervals as scale
/// `k` and position `n` and stores the total in `len`; returns
/// `BufferTooSmall` (with `len` set) when `cap` is insufficient.
///
/// # Safety
/// `intervals` must point to `2 count` doubles, `ks` and `ns` to `cap`
/// elements each, `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_whitney(
    intervals: *const f64,
    count: usize,
    ks: *mut i32,
    ns: *mut i64,
    cap: usize,
    len: *mut usize,
) -> CurvelabStatus {
    guard(|| {
        let raw = slice_in(intervals, 2 * count)?;
        let l = out(len)?;
        let om: Vec<(f64, f64)> = raw.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let fam = whitney_decompose(&om)?;
        *l = fam.len();
        if fam.len() > cap {
            return Err(Fail::Small);
        }
        if !fam.is_empty() && (ks.is_null() || ns.is_null()) {
            return Err(Fail::Null);
        }
        for (i, j) in fam.iter().enumerate() {
            *ks.add(i) = j.k;
            *ns.add(i) = j.n;
        }
        Ok(())
    })
}

/// Endpoint counterexample scaling experiment over `len` values of δ.
///
/// # Safety
/// `deltas` must point to `len` doubles; `out_report` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn curvelab_sharpness(
    d: usize,
    r: f64,
    p1: f64,
    p2: f64,
    deltas: *const f64,
    len: usize,
    resolution: usize,
    out_report: *mut *mut CurvelabReport,
) -> CurvelabStatus {
    guard(|| {
        let ds = slice_in(deltas, len)?;
        let o = out(out_report)?;
        let rep = endpoint_scaling_experiment_with(d, r, p1, p2, ds, resolution)?;
        *o = Box::into_raw(Box::new(CurvelabReport(rep)));
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a report handle.
#[no_mangle]
pub unsafe extern "C" fn curvelab_report_free(r: *mut CurvelabReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// 1 when every gating flag holds, 0 otherwise (and for a null handle).
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn curvelab_report_pass(r: *const CurvelabReport) -> i32 {
    r.as_ref().map_or(0, |r| i32::from(r.0.pass))
}

/// Looks up a fitted value such as `"slope"`.
///
/// # Safety
/// `r` must be a live report handle, `key` a NUL-terminated string and
/// `value` writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_report_fit(r: *const CurvelabReport, key: *const c_char, value: *mut f64) -> CurvelabStatus {
    guard(|| {
        let r = &handle(r)?.0;
        if key.is_null() {
            return Err(Fail::Null);
        }
        let k = CStr::from_ptr(key).to_str().map_err(|_| Error::InvalidArgument("key is not UTF-8".into()))?;
        let v = out(value)?;
        *v = *r.fits.get(k).ok_or_else(|| Error::InvalidArgument(format!("no fit named `{k}`")))?;
        Ok(())
    })
}

/// Writes the report CSV, NUL-terminated, into `buf`; `len` receives the
/// length without the NUL.
///
/// # Safety
/// `r` must be a live report handle, `buf` must point to `cap` bytes and
/// `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn curvelab_report_csv(r: *const CurvelabReport, buf: *mut c_char, cap: usize, len: *mut usize) -> CurvelabStatus {
    guard(|| {
        let csv = handle(r)?.0.to_csv_string();
        let l = out(len)?;
        *l = csv.len();
        if buf.is_null() {
            return Err(Fail::Null);
        }
        if cap < csv.len() + 1 {
            return Err(Fail::Small);
        }
        ptr::copy_nonoverlapping(csv.as_ptr() as *const c_char, buf, csv.len());
        *buf.add(csv.len()) = 0;
        Ok(())
    })
}
