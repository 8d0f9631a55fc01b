//! C interface. Models, plants and simulation traces are opaque handles
//! created by `pt_*_new`/`pt_*_from_json` and released with the matching
//! `pt_*_free`. Every call returns a [`PtStatus`]; on failure the message is
//! available from [`pt_last_error`] on the same thread.
//!
//! Matrices are passed row-major. Complex inputs take separate real and
//! imaginary arrays; a null imaginary array means zero.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyrotune::cloop::{simulate_closed_loop, LoopConfigDoc, PlantMatrix};
use pyrotune::linss::{reduce_dae, DaeJacobians};
use pyrotune::lti::{step_response_analytic, step_response_numeric};
use pyrotune::pairing::{pair_assignment, pair_sequential, rga, ria};
use pyrotune::simc::{tune_loop, TauC};
use pyrotune::sysid::{fit_sopdt, initial_guess, NormalizedStep};
use pyrotune::{Error, TimeSeries, TransferFunction};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullArgument = 1,
    /// Bad input: dimensions, validation, parse errors.
    InvalidArgument = 2,
    /// Singular matrices, missing responses and similar numerical failures.
    Numerical = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtPairingMethod {
    Sequential = 0,
    Assignment = 1,
}

/// Fitted second-order model with delay.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PtFit {
    pub k0: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau_z: f64,
    pub delay: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PtPiTuning {
    pub kp: f64,
    pub ki: f64,
    pub tau_c: f64,
    pub k: f64,
    pub tau1: f64,
    /// Effective delay after reduction.
    pub delay: f64,
}

pub struct PtTransferFunction(TransferFunction);
pub struct PtPlant(PlantMatrix);
pub struct PtTrace {
    series: TimeSeries,
    names: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(e: Error) -> PtStatus {
    let status = if e.exit_code() == 1 {
        PtStatus::Numerical
    } else {
        PtStatus::InvalidArgument
    };
    set_error(e.to_string());
    status
}

fn null(what: &str) -> PtStatus {
    set_error(format!("{what} is null"));
    PtStatus::NullArgument
}

fn guard<F: FnOnce() -> PtStatus>(f: F) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == PtStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            PtStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() { return null(stringify!($p)); })+
    };
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn input<'a>(ptr: *const f64, len: usize) -> &'a [f64] {
    if len == 0 || ptr.is_null() {
        &[]
    } else {
        slice::from_raw_parts(ptr, len)
    }
}

/// # Safety
/// `s` must be a valid nul-terminated string.
unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, PtStatus> {
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("string is not UTF-8".into());
        PtStatus::InvalidArgument
    })
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates `k0 prod(tz s + 1) / prod(tp s + 1) e^(-delay s)`.
///
/// # Safety
/// `zeros` and `poles` point to `n_zeros` and `n_poles` values (may be null
/// when the count is zero); `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pt_tf_new(
    k0: f64,
    zeros: *const f64,
    n_zeros: usize,
    poles: *const f64,
    n_poles: usize,
    delay: f64,
    out: *mut *mut PtTransferFunction,
) -> PtStatus {
    guard(|| {
        non_null!(out);
        match TransferFunction::new(
            k0,
            input(zeros, n_zeros).to_vec(),
            input(poles, n_poles).to_vec(),
            delay,
        ) {
            Ok(g) => {
                *out = Box::into_raw(Box::new(PtTransferFunction(g)));
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `tf` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pt_tf_free(tf: *mut PtTransferFunction) {
    if !tf.is_null() {
        drop(Box::from_raw(tf));
    }
}

/// Unit step response at `n` times from the closed form.
///
/// # Safety
/// `t` and `out` point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn pt_tf_step(
    tf: *const PtTransferFunction,
    t: *const f64,
    n: usize,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        non_null!(tf, t, out);
        let out = slice::from_raw_parts_mut(out, n);
        for (o, &ti) in out.iter_mut().zip(input(t, n)) {
            match step_response_analytic(&(*tf).0, ti) {
                Ok(v) => *o = v,
                Err(e) => return fail(e),
            }
        }
        PtStatus::Ok
    })
}

/// Unit step response by fixed-step integration with step `dt`.
///
/// # Safety
/// `t` and `out` point to `n` values; `t` increases.
#[no_mangle]
pub unsafe extern "C" fn pt_tf_step_numeric(
    tf: *const PtTransferFunction,
    t: *const f64,
    n: usize,
    dt: f64,
    out: *mut f64,
) -> PtStatus {
    guard(|| {
        non_null!(tf, t, out);
        match step_response_numeric(&(*tf).0, input(t, n), dt) {
            Ok(ts) => {
                slice::from_raw_parts_mut(out, n)
                    .copy_from_slice(ts.channel("y").expect("response channel"));
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// `G(i omega)`, delay included.
///
/// # Safety
/// `re` and `im` are writable.
#[no_mangle]
pub unsafe extern "C" fn pt_tf_frequency_response(
    tf: *const PtTransferFunction,
    omega: f64,
    re: *mut f64,
    im: *mut f64,
) -> PtStatus {
    guard(|| {
        non_null!(tf, re, im);
        let v = (*tf).0.frequency_response(omega);
        *re = v.re;
        *im = v.im;
        PtStatus::Ok
    })
}

/// Fits the second-order model with delay to normalized step data.
///
/// # Safety
/// `t` and `s` point to `n` values; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pt_fit_sopdt(
    t: *const f64,
    s: *const f64,
    n: usize,
    out: *mut PtFit,
) -> PtStatus {
    guard(|| {
        non_null!(t, s, out);
        let run = || -> pyrotune::Result<PtFit> {
            let data = NormalizedStep::new(input(t, n).to_vec(), input(s, n).to_vec())?;
            let fit = fit_sopdt(&data, &initial_guess(&data)?)?;
            let m = &fit.model;
            let p = m.poles();
            let tau_z = m.effective_zeros().next().unwrap_or(0.0);
            Ok(PtFit {
                k0: m.k0(),
                tau1: p[0],
                tau2: p.get(1).copied().unwrap_or(p[0]),
                tau_z,
                delay: m.delay(),
                residual_norm: fit.residual_norm,
                converged: fit.converged,
                iterations: fit.iterations as u32,
            })
        };
        match run() {
            Ok(f) => {
                *out = f;
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// SIMC PI tuning; a NaN `tau_c` selects the effective delay.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pt_tune_pi(
    tf: *const PtTransferFunction,
    tau_c: f64,
    out: *mut PtPiTuning,
) -> PtStatus {
    guard(|| {
        non_null!(tf, out);
        let policy = if tau_c.is_nan() {
            TauC::Recommended
        } else {
            TauC::Value(tau_c)
        };
        match tune_loop(&(*tf).0, policy) {
            Ok(r) => {
                *out = PtPiTuning {
                    kp: r.gains.kp,
                    ki: r.gains.ki,
                    tau_c: r.gains.tau_c,
                    k: r.fopdt.k,
                    tau1: r.fopdt.tau1,
                    delay: r.fopdt.taud,
                };
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn complex_matrix(re: *const f64, im: *const f64, n: usize) -> DMatrix<Complex64> {
    let re = input(re, n * n);
    let im = if im.is_null() {
        None
    } else {
        Some(input(im, n * n))
    };
    DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(re[i * n + j], im.map_or(0.0, |v| v[i * n + j]))
    })
}

/// Relative gain array of an `n` by `n` matrix.
///
/// # Safety
/// `g_re`, `lambda_re` and `lambda_im` point to `n * n` values; `g_im` is
/// null or points to `n * n` values.
#[no_mangle]
pub unsafe extern "C" fn pt_rga(
    g_re: *const f64,
    g_im: *const f64,
    n: usize,
    lambda_re: *mut f64,
    lambda_im: *mut f64,
) -> PtStatus {
    guard(|| {
        non_null!(g_re, lambda_re, lambda_im);
        match rga(&complex_matrix(g_re, g_im, n)) {
            Ok(l) => {
                let (re, im) = (
                    slice::from_raw_parts_mut(lambda_re, n * n),
                    slice::from_raw_parts_mut(lambda_im, n * n),
                );
                for i in 0..n {
                    for j in 0..n {
                        re[i * n + j] = l[(i, j)].re;
                        im[i * n + j] = l[(i, j)].im;
                    }
                }
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Pairs the rows (CVs) of a gain matrix with its columns (MVs) by relative
/// interaction; `mv_of_cv[i]` receives the column paired with row `i`.
///
/// # Safety
/// `g_re` points to `n * n` values, `g_im` is null or points to `n * n`
/// values, `mv_of_cv` points to `n` values.
#[no_mangle]
pub unsafe extern "C" fn pt_pair(
    g_re: *const f64,
    g_im: *const f64,
    n: usize,
    method: PtPairingMethod,
    mv_of_cv: *mut usize,
) -> PtStatus {
    guard(|| {
        non_null!(g_re, mv_of_cv);
        let res = rga(&complex_matrix(g_re, g_im, n)).and_then(|l| {
            let phi = ria(&l);
            match method {
                PtPairingMethod::Sequential => pair_sequential(&phi),
                PtPairingMethod::Assignment => pair_assignment(&phi),
            }
        });
        match res {
            Ok(r) => {
                slice::from_raw_parts_mut(mv_of_cv, n).copy_from_slice(&r.mv_of_cv());
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Reduces DAE Jacobians (JSON text, as read by the `linearize` command) to
/// a state-space model. `*out` receives JSON text to be released with
/// [`pt_string_free`].
///
/// # Safety
/// `jacobians_json` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pt_reduce_dae_json(
    jacobians_json: *const c_char,
    out: *mut *mut c_char,
) -> PtStatus {
    guard(|| {
        non_null!(jacobians_json, out);
        let s = match text(jacobians_json) {
            Ok(s) => s,
            Err(st) => return st,
        };
        let run = || -> pyrotune::Result<String> {
            let j: DaeJacobians = serde_json::from_str(s)
                .map_err(|e| Error::validation("jacobians", e.to_string()))?;
            let ss = reduce_dae(&j)?;
            serde_json::to_string(&ss).map_err(|e| Error::validation("state_space", e.to_string()))
        };
        match run() {
            Ok(json) => {
                *out = CString::new(json).expect("no interior nul").into_raw();
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `s` must be a string returned by this library and not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a plant file (JSON text).
///
/// # Safety
/// `json` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pt_plant_from_json(
    json: *const c_char,
    out: *mut *mut PtPlant,
) -> PtStatus {
    guard(|| {
        non_null!(json, out);
        let s = match text(json) {
            Ok(s) => s,
            Err(st) => return st,
        };
        match PlantMatrix::from_json(s) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(PtPlant(p)));
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `plant` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pt_plant_free(plant: *mut PtPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// Closed-loop simulation with a loop configuration given as JSON text.
///
/// # Safety
/// `loops_json` is a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn pt_simulate(
    plant: *const PtPlant,
    loops_json: *const c_char,
    out: *mut *mut PtTrace,
) -> PtStatus {
    guard(|| {
        non_null!(plant, loops_json, out);
        let s = match text(loops_json) {
            Ok(s) => s,
            Err(st) => return st,
        };
        let plant = &(*plant).0;
        let run = || -> pyrotune::Result<TimeSeries> {
            let cfg = LoopConfigDoc::from_json(s)?.resolve(plant)?;
            simulate_closed_loop(plant, &cfg)
        };
        match run() {
            Ok(series) => {
                let names = series
                    .channel_names()
                    .into_iter()
                    .map(|n| CString::new(n.replace('\0', " ")).expect("no interior nul"))
                    .collect();
                *out = Box::into_raw(Box::new(PtTrace { series, names }));
                PtStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of samples in a trace.
///
/// # Safety
/// `trace` comes from [`pt_simulate`].
#[no_mangle]
pub unsafe extern "C" fn pt_trace_len(trace: *const PtTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.series.len())
}

/// Number of data channels in a trace.
///
/// # Safety
/// `trace` comes from [`pt_simulate`].
#[no_mangle]
pub unsafe extern "C" fn pt_trace_channels(trace: *const PtTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.names.len())
}

/// Sample times, owned by the trace.
///
/// # Safety
/// `trace` comes from [`pt_simulate`].
#[no_mangle]
pub unsafe extern "C" fn pt_trace_time(trace: *const PtTrace) -> *const f64 {
    trace
        .as_ref()
        .map_or(ptr::null(), |t| t.series.t().as_ptr())
}

/// Name of channel `index`, owned by the trace; null when out of range.
///
/// # Safety
/// `trace` comes from [`pt_simulate`].
#[no_mangle]
pub unsafe extern "C" fn pt_trace_channel_name(
    trace: *const PtTrace,
    index: usize,
) -> *const c_char {
    trace
        .as_ref()
        .and_then(|t| t.names.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Values of channel `index`, owned by the trace; null when out of range.
///
/// # Safety
/// `trace` comes from [`pt_simulate`].
#[no_mangle]
pub unsafe extern "C" fn pt_trace_channel(trace: *const PtTrace, index: usize) -> *const f64 {
    trace
        .as_ref()
        .and_then(|t| t.series.channels().nth(index))
        .map_or(ptr::null(), |(_, v)| v.as_ptr())
}

/// # Safety
/// `trace` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pt_trace_free(trace: *mut PtTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}
