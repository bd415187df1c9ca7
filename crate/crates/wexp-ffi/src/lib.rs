//! C ABI for `wexp`.
//!
//! Every fallible function returns a [`WexpStatus`]; on failure the message
//! is kept per thread and can be copied out with
//! [`wexp_last_error_message`]. Objects cross the boundary as opaque handles
//! created by a `*_new` function and released by the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wexp::chaos::coeff3;
use wexp::expansion::{expand_expectation, ExpansionConfig, TestFunction};
use wexp::exponent::{exponent, ChaosForm, ExponentValue, Rational};
use wexp::paths::{sample_wiener, solve, CoefFn, Scheme, WienerGrid};
use wexp::volatility::{robust_rv, Filter, FilterSpec};
use wexp::weights::{FamilyKind, WeightFamily, WeightFn};
use wexp::Error;

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WexpStatus {
    Ok = 0,
    /// Bad input: unknown catalog name, out-of-range parameter.
    InvalidArgument = 1,
    /// A computation broke down (degenerate variance, explosion, overflow).
    Numerical = 2,
    /// A required pointer was null.
    NullPointer = 3,
    /// Output buffer too small.
    BufferTooSmall = 4,
    /// Internal panic caught at the boundary.
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> WexpStatus {
    if e.is_numerical() {
        WexpStatus::Numerical
    } else {
        WexpStatus::InvalidArgument
    }
}

fn guard(f: impl FnOnce() -> Result<(), WexpStatus>) -> WexpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            WexpStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside wexp".into());
            WexpStatus::Panic
        }
    }
}

fn lib<T>(r: wexp::Result<T>) -> Result<T, WexpStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn null() -> WexpStatus {
    set_error("null pointer argument".into());
    WexpStatus::NullPointer
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, WexpStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not UTF-8".into());
        WexpStatus::InvalidArgument
    })
}

unsafe fn parse<T: std::str::FromStr<Err = Error>>(p: *const c_char) -> Result<T, WexpStatus> {
    lib(read_str(p)?.parse())
}

unsafe fn out_ref<'a, T>(p: *mut T) -> Result<&'a mut T, WexpStatus> {
    p.as_mut().ok_or_else(null)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wexp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated).
/// `needed` receives the buffer size required, including the terminator.
///
/// # Safety
/// `buf` must point to `len` writable bytes or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn wexp_last_error_message(
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> WexpStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let size = msg.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = size;
    }
    if buf.is_null() || len < size {
        return WexpStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast(), msg.len());
    *buf.add(msg.len()) = 0;
    WexpStatus::Ok
}

/// Three-factor product coefficient; fails with `Numerical` if it does not
/// fit in 64 bits.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wexp_coeff3(
    q1: u32,
    q2: u32,
    q3: u32,
    nu: u32,
    out: *mut u64,
) -> WexpStatus {
    guard(|| {
        let out = out_ref(out)?;
        let c = lib(coeff3(q1, q2, q3, nu))?;
        *out = u64::try_from(c).map_err(|_| {
            set_error("coefficient exceeds 64 bits".into());
            WexpStatus::Numerical
        })?;
        Ok(())
    })
}

/// Exponent of a multilinear form as a reduced fraction.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WexpExponent {
    /// Non-zero when the exponent is minus infinity.
    pub neg_infinity: i32,
    pub numer: i64,
    pub denom: i64,
    pub value: f64,
}

/// Exponent of the form with scale `n^{alpha_numer/alpha_denom}` and the
/// given chaos orders.
///
/// # Safety
/// `orders` must point to `len` readable values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wexp_exponent(
    alpha_numer: i64,
    alpha_denom: i64,
    orders: *const i64,
    len: usize,
    out: *mut WexpExponent,
) -> WexpStatus {
    guard(|| {
        let out = out_ref(out)?;
        if orders.is_null() || alpha_denom == 0 {
            set_error("orders must be non-null and the denominator non-zero".into());
            return Err(WexpStatus::InvalidArgument);
        }
        let orders = std::slice::from_raw_parts(orders, len).to_vec();
        let form = lib(ChaosForm::new(
            Rational::new(alpha_numer, alpha_denom),
            orders,
            "ffi",
        ))?;
        let e = exponent(&form);
        *out = match e {
            ExponentValue::NegInfinity => WexpExponent {
                neg_infinity: 1,
                numer: 0,
                denom: 1,
                value: f64::NEG_INFINITY,
            },
            ExponentValue::Finite(r) => WexpExponent {
                neg_infinity: 0,
                numer: *r.numer(),
                denom: *r.denom(),
                value: e.to_f64(),
            },
        };
        Ok(())
    })
}

/// Opaque weight family.
pub struct WexpFamily(WeightFamily);

/// Build a family of kind `anticipative`, `predictable` or `constant` with
/// the same catalog weight (e.g. `sin2`, `const:1`) at every order.
///
/// # Safety
/// Strings must be NUL-terminated, `orders` must point to `len` values and
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wexp_family_new(
    kind: *const c_char,
    weight: *const c_char,
    orders: *const u32,
    len: usize,
    out: *mut *mut WexpFamily,
) -> WexpStatus {
    guard(|| {
        let out = out_ref(out)?;
        let kind: FamilyKind = parse(kind)?;
        let weight: WeightFn = parse(weight)?;
        if orders.is_null() {
            return Err(null());
        }
        let terms = std::slice::from_raw_parts(orders, len)
            .iter()
            .map(|&q| (q, weight.clone()))
            .collect();
        let fam = lib(WeightFamily::new(kind, terms))?;
        *out = Box::into_raw(Box::new(WexpFamily(fam)));
        Ok(())
    })
}

/// # Safety
/// `fam` must come from [`wexp_family_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wexp_family_free(fam: *mut WexpFamily) {
    if !fam.is_null() {
        drop(Box::from_raw(fam));
    }
}

/// Opaque Brownian path on a grid of `n` cells refined `r` times.
pub struct WexpPath(WienerGrid);

/// Sample replication `rep` of the stream selected by `seed`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn wexp_path_sample(
    n: usize,
    r: usize,
    seed: u64,
    rep: u64,
    out: *mut *mut WexpPath,
) -> WexpStatus {
    guard(|| {
        let out = out_ref(out)?;
        let grid = lib(sample_wiener(n, r, seed, rep))?;
        *out = Box::into_raw(Box::new(WexpPath(grid)));
        Ok(())
    })
}

/// Number of path values (`n·r + 1`).
///
/// # Safety
/// `path` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn wexp_path_len(path: *const WexpPath) -> usize {
    path.as_ref().map_or(0, |p| p.0.values.len())
}

/// Copy the path values into `buf`.
///
/// # Safety
/// `path` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wexp_path_values(
    path: *const WexpPath,
    buf: *mut f64,
    len: usize,
) -> WexpStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(null)?;
        if buf.is_null() {
            return Err(null());
        }
        let v = &p.0.values;
        if len < v.len() {
            set_error(format!("buffer holds {len} values, {} needed", v.len()));
            return Err(WexpStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// # Safety
/// `path` must come from [`wexp_path_sample`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wexp_path_free(path: *mut WexpPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Weighted variation of one path and its limit variance.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WexpVariation {
    pub v_n: f64,
    pub z_n: f64,
    pub m_n: f64,
    pub n_n: f64,
    pub g_inf: f64,
}

/// The weighted variation of `path`, or its centred error for anticipative
/// families with the single order 2.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wexp_variation(
    fam: *const WexpFamily,
    path: *const WexpPath,
    out: *mut WexpVariation,
) -> WexpStatus {
    guard(|| {
        let fam = &fam.as_ref().ok_or_else(null)?.0;
        let grid = &path.as_ref().ok_or_else(null)?.0;
        let out = out_ref(out)?;
        let s = if fam.is_quadratic_anticipative() {
            lib(wexp::estimators::quadratic_error(fam, grid))?.sample
        } else {
            lib(wexp::estimators::variation(fam, grid))?
        };
        *out = WexpVariation {
            v_n: s.v_n,
            z_n: s.z_n,
            m_n: s.m_n,
            n_n: s.n_n,
            g_inf: fam.g_infinity(grid),
        };
        Ok(())
    })
}

/// Expansion of `E[f(Z_n, X)]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WexpExpansion {
    pub target: f64,
    pub se_target: f64,
    pub zeroth: f64,
    pub first: f64,
    pub err0: f64,
    pub se_err0: f64,
    pub err1: f64,
    pub se_err1: f64,
}

/// Monte Carlo comparison of `E[f(Z_n, X)]` with its zeroth- and
/// first-order approximations. `f` is a catalog name such as `z3`.
///
/// # Safety
/// `fam` must be live, `f` NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wexp_expand(
    fam: *const WexpFamily,
    f: *const c_char,
    n: usize,
    reps: u64,
    approx_reps: u64,
    seed: u64,
    out: *mut WexpExpansion,
) -> WexpStatus {
    guard(|| {
        let fam = &fam.as_ref().ok_or_else(null)?.0;
        let f: TestFunction = parse(f)?;
        let out = out_ref(out)?;
        let cfg = ExpansionConfig {
            reps,
            approx_reps,
            seed,
            ..ExpansionConfig::default()
        };
        let r = lib(expand_expectation(fam, &f, n, &cfg))?;
        *out = WexpExpansion {
            target: r.target,
            se_target: r.se_target,
            zeroth: r.zeroth,
            first: r.first,
            err0: r.err0,
            se_err0: r.se_err0,
            err1: r.err1,
            se_err1: r.se_err1,
        };
        Ok(())
    })
}

/// Filtered realized volatility of one simulated diffusion path.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WexpRobustRv {
    pub u_n: f64,
    pub v_robust: f64,
    pub v_target: f64,
    pub z_n: f64,
    pub g_inf: f64,
    pub integrated_variance: f64,
}

/// Simulate `dX = σ(X)dw + b(X)dt` (Milstein, catalog coefficients such as
/// `tanh:1,0.1`) and apply the catalog filter `filter` with window `lambda`.
///
/// # Safety
/// Strings must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn wexp_robust_rv(
    sigma: *const c_char,
    drift: *const c_char,
    x0: f64,
    filter: *const c_char,
    lambda: f64,
    n: usize,
    refine: usize,
    seed: u64,
    rep: u64,
    out: *mut WexpRobustRv,
) -> WexpStatus {
    guard(|| {
        let sigma: CoefFn = parse(sigma)?;
        let drift: CoefFn = parse(drift)?;
        let phi: Filter = parse(filter)?;
        let out = out_ref(out)?;
        let spec = lib(FilterSpec::new(phi, lambda))?;
        let grid = lib(sample_wiener(n, refine, seed, rep))?;
        let path = lib(solve(grid, &sigma, &drift, x0, Scheme::Milstein))?;
        let s = lib(robust_rv(&path, &spec))?;
        *out = WexpRobustRv {
            u_n: s.u_n,
            v_robust: s.v_robust,
            v_target: s.v_target,
            z_n: s.z_n,
            g_inf: s.g_inf,
            integrated_variance: s.u_inf,
        };
        Ok(())
    })
}
