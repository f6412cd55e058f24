//! C interface to the `dbshadow` simulator.
//!
//! Every fallible function returns a [`DbsStatus`]; on failure the message
//! is available from [`dbs_last_error_message`] on the same thread. Handles
//! are opaque and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dbshadow::channel::{apply_channel, default_c, exact_signal, verify_detailed_balance, ChannelParams};
use dbshadow::estimate::{estimate_all, plan_sizing, Method};
use dbshadow::lowerbound::{hybrid_bound, tv_to_ground_closed_form};
use dbshadow::operator::{build_hamiltonian, parse_pauli_terms, HermitianOperator};
use dbshadow::trajectory::{run_prepared, Engine, PreparedSystem, ProtocolPlan, Transcript};
use dbshadow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numeric = 3,
    Construction = 4,
    Parse = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DbsMethod {
    TruncatedMean = 0,
    MedianOfMeans = 1,
}

impl From<DbsMethod> for Method {
    fn from(m: DbsMethod) -> Self {
        match m {
            DbsMethod::TruncatedMean => Method::MeanOfTruncatedBlockMeans,
            DbsMethod::MedianOfMeans => Method::MedianOfMeans,
        }
    }
}

/// Hamiltonian, Gibbs state and one measurement channel per observable.
pub struct DbsSystem {
    prepared: PreparedSystem,
    observables: Vec<HermitianOperator>,
    ids: Vec<String>,
    params: ChannelParams,
}

/// Outcome labels of one protocol run.
pub struct DbsTranscript {
    inner: Transcript,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> DbsStatus {
    match err {
        Error::Input(_) => DbsStatus::InvalidInput,
        Error::Numeric(_) => DbsStatus::Numeric,
        Error::Construction(_) => DbsStatus::Construction,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => DbsStatus::Parse,
        Error::Io(_) => DbsStatus::Io,
    }
}

struct Fail(DbsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DbsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DbsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DbsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            DbsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(DbsStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn operator(src: &str, n: usize, name: &str) -> Result<HermitianOperator, Fail> {
    let terms = parse_pauli_terms(src, name)?;
    Ok(build_hamiltonian(&terms, n)?)
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dbs_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// `min(0.5, 2 g(0))` for filter width `sigma`.
#[no_mangle]
pub extern "C" fn dbs_default_c(sigma: f64) -> f64 {
    default_c(sigma)
}

/// Builds the Gibbs state of `hamiltonian` and one channel per observable.
/// Operators are Pauli sums, one `<coefficient> <word>` per line. Pass
/// `c <= 0` for the default coupling.
///
/// # Safety
/// `hamiltonian` must be a NUL-terminated string, `observables` an array of
/// `count` such strings, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dbs_system_new(
    n: usize,
    hamiltonian: *const c_char,
    observables: *const *const c_char,
    count: usize,
    beta: f64,
    sigma: f64,
    c: f64,
    out_system: *mut *mut DbsSystem,
) -> DbsStatus {
    guard(|| {
        let out_system = out(out_system, "out_system")?;
        *out_system = ptr::null_mut();
        let h = operator(text(hamiltonian, "hamiltonian")?, n, "hamiltonian")?;
        if observables.is_null() || count == 0 {
            return Err(Fail(DbsStatus::InvalidInput, "need at least one observable".into()));
        }
        let mut ops = Vec::with_capacity(count);
        let mut ids = Vec::with_capacity(count);
        for i in 0..count {
            let id = format!("A{i}");
            ops.push(operator(text(*observables.add(i), "observable")?, n, &id)?);
            ids.push(id);
        }
        if !(sigma > 0.0) {
            return Err(Fail(DbsStatus::InvalidInput, format!("sigma must be positive, got {sigma}")));
        }
        let c = if c > 0.0 { c } else { default_c(sigma) };
        let params = ChannelParams { beta, sigma, c, group_tol: None };
        let prepared = PreparedSystem::new(&h, &ops, &ids, &params)?;
        *out_system = Box::into_raw(Box::new(DbsSystem { prepared, observables: ops, ids, params }));
        Ok(())
    })
}

/// # Safety
/// `system` must be null or a handle from [`dbs_system_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dbs_system_free(system: *mut DbsSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// Number of observables, or 0 for a null handle.
///
/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dbs_system_observables(system: *const DbsSystem) -> usize {
    system.as_ref().map_or(0, |s| s.ids.len())
}

unsafe fn channel_of<'a>(system: *const DbsSystem, index: usize) -> Result<&'a DbsSystem, Fail> {
    let s = handle(system, "system")?;
    if index >= s.ids.len() {
        return Err(Fail(DbsStatus::InvalidInput, format!("observable index {index} out of range")));
    }
    Ok(s)
}

/// Outcome probabilities `(p0, p1, p2)` of channel `index` on the Gibbs state.
///
/// # Safety
/// `system` must be a live handle and `out_probs` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn dbs_system_probabilities(
    system: *const DbsSystem,
    index: usize,
    out_probs: *mut f64,
) -> DbsStatus {
    guard(|| {
        let s = channel_of(system, index)?;
        if out_probs.is_null() {
            return Err(null("out_probs"));
        }
        let o = apply_channel(&s.prepared.channels[index], &s.prepared.rho)?;
        ptr::copy_nonoverlapping(o.probs.as_ptr(), out_probs, 3);
        Ok(())
    })
}

/// Mean single-shot sample `(2/c)(p1 - p2)` of channel `index`, which equals
/// `Tr[rho A]`, and `Tr[rho A]` computed directly.
///
/// # Safety
/// `system` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dbs_system_signal(
    system: *const DbsSystem,
    index: usize,
    out_signal: *mut f64,
    out_expectation: *mut f64,
) -> DbsStatus {
    guard(|| {
        let s = channel_of(system, index)?;
        let signal = out(out_signal, "out_signal")?;
        let expectation = out(out_expectation, "out_expectation")?;
        *signal = exact_signal(&s.prepared.channels[index], &s.prepared.rho)?;
        *expectation = s.observables[index].expectation(&s.prepared.rho);
        Ok(())
    })
}

/// Worst detailed-balance residual of channel `index` and whether every
/// residual is within `tol`.
///
/// # Safety
/// `system` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dbs_system_verify(
    system: *const DbsSystem,
    index: usize,
    tol: f64,
    out_worst: *mut f64,
    out_passed: *mut bool,
) -> DbsStatus {
    guard(|| {
        let s = channel_of(system, index)?;
        let worst = out(out_worst, "out_worst")?;
        let passed = out(out_passed, "out_passed")?;
        let rep = verify_detailed_balance(&s.prepared.channels[index], &s.prepared.rho, tol)?;
        *worst = rep.worst();
        *passed = rep.passed;
        Ok(())
    })
}

/// Repetition count `ell` and copy count from the estimator sizing rules.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dbs_plan_sizing(
    method: DbsMethod,
    epsilon: f64,
    delta: f64,
    observables: usize,
    c: f64,
    out_ell: *mut usize,
    out_copies: *mut usize,
) -> DbsStatus {
    guard(|| {
        let ell = out(out_ell, "out_ell")?;
        let copies = out(out_copies, "out_copies")?;
        let s = plan_sizing(method.into(), epsilon, delta, observables, c)?;
        *ell = s.ell;
        *copies = s.copies;
        Ok(())
    })
}

/// Runs the protocol: `copies` Gibbs copies, each measured `ell` times per
/// observable in order. Results depend only on `seed`.
///
/// # Safety
/// `system` must be a live handle and `out_transcript` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dbs_system_run(
    system: *const DbsSystem,
    ell: usize,
    copies: usize,
    seed: u64,
    out_transcript: *mut *mut DbsTranscript,
) -> DbsStatus {
    guard(|| {
        let s = handle(system, "system")?;
        let slot = out(out_transcript, "out_transcript")?;
        *slot = ptr::null_mut();
        let plan = ProtocolPlan {
            observable_ids: s.ids.clone(),
            ell,
            copies,
            seed,
            channel_params: s.params,
            engine: Engine::default(),
        };
        let inner = run_prepared(&plan, &s.prepared)?;
        *slot = Box::into_raw(Box::new(DbsTranscript { inner }));
        Ok(())
    })
}

/// # Safety
/// `transcript` must be null or a handle from [`dbs_system_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dbs_transcript_free(transcript: *mut DbsTranscript) {
    if !transcript.is_null() {
        drop(Box::from_raw(transcript));
    }
}

/// Number of outcome labels, or 0 for a null handle.
///
/// # Safety
/// `transcript` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dbs_transcript_len(transcript: *const DbsTranscript) -> usize {
    transcript.as_ref().map_or(0, |t| t.inner.len())
}

/// Copies the labels (0, 1 or 2) in copy, observable, repetition order.
///
/// # Safety
/// `transcript` must be a live handle and `buf` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn dbs_transcript_labels(
    transcript: *const DbsTranscript,
    buf: *mut u8,
    cap: usize,
) -> DbsStatus {
    guard(|| {
        let t = handle(transcript, "transcript")?;
        let labels = t.inner.labels();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < labels.len() {
            return Err(Fail(DbsStatus::BufferTooSmall, format!("need {} bytes, got {cap}", labels.len())));
        }
        ptr::copy_nonoverlapping(labels.as_ptr(), buf, labels.len());
        Ok(())
    })
}

/// Writes the 64-character hex fingerprint plus a NUL into `buf`.
///
/// # Safety
/// `transcript` must be a live handle and `buf` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn dbs_transcript_fingerprint(
    transcript: *const DbsTranscript,
    buf: *mut c_char,
    cap: usize,
) -> DbsStatus {
    guard(|| {
        let t = handle(transcript, "transcript")?;
        let fp = t.inner.rng_fingerprint.as_bytes();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap <= fp.len() {
            return Err(Fail(DbsStatus::BufferTooSmall, format!("need {} bytes, got {cap}", fp.len() + 1)));
        }
        ptr::copy_nonoverlapping(fp.as_ptr().cast::<c_char>(), buf, fp.len());
        *buf.add(fp.len()) = 0;
        Ok(())
    })
}

/// One estimate per observable. Fails if the transcript is too short for
/// the requested `(epsilon, delta)`.
///
/// # Safety
/// `transcript` must be a live handle and `out_estimates` must hold `cap`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn dbs_transcript_estimates(
    transcript: *const DbsTranscript,
    method: DbsMethod,
    epsilon: f64,
    delta: f64,
    out_estimates: *mut f64,
    cap: usize,
) -> DbsStatus {
    guard(|| {
        let t = handle(transcript, "transcript")?;
        if out_estimates.is_null() {
            return Err(null("out_estimates"));
        }
        let m = t.inner.plan.observables();
        if cap < m {
            return Err(Fail(DbsStatus::BufferTooSmall, format!("need {m} doubles, got {cap}")));
        }
        let reports = estimate_all(&t.inner, method.into(), epsilon, delta)?;
        for (i, r) in reports.iter().enumerate() {
            *out_estimates.add(i) = r.estimate;
        }
        Ok(())
    })
}

/// `2 T sqrt(max_b p_b)` for `len` flip probabilities.
///
/// # Safety
/// `flip_probs` must point to `len` doubles; `out_bound` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dbs_hybrid_bound(
    flip_probs: *const f64,
    len: usize,
    queries: usize,
    out_bound: *mut f64,
) -> DbsStatus {
    guard(|| {
        let bound = out(out_bound, "out_bound")?;
        if flip_probs.is_null() {
            return Err(null("flip_probs"));
        }
        *bound = hybrid_bound(std::slice::from_raw_parts(flip_probs, len), queries)?;
        Ok(())
    })
}

/// Total-variation distance between the Gibbs distribution of a Boolean
/// Hamiltonian with `k` zeros on `n` bits and its ground distribution.
///
/// # Safety
/// `out_tv` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dbs_tv_to_ground(n: usize, k: u64, beta: f64, out_tv: *mut f64) -> DbsStatus {
    guard(|| {
        let tv = out(out_tv, "out_tv")?;
        *tv = tv_to_ground_closed_form(n, k, beta)?;
        Ok(())
    })
}
