//! C ABI over the satgate library.
//!
//! Every fallible function returns a status code (`SATGATE_OK` on success)
//! and writes results through out-pointers. After a failure,
//! `satgate_last_error` returns a message for the calling thread. Handles
//! are opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use satgate::dialog_model::{parse_session_line, Session};
use satgate::evalmetrics;
use satgate::gate_sim::{self, Decision};
use satgate::satformer::Predictor;
use satgate::weaklabel::{weak_label, WeakLabeler};
use satgate::Error;

pub const SATGATE_OK: c_int = 0;
pub const SATGATE_ERR_NULL: c_int = 1;
pub const SATGATE_ERR_UTF8: c_int = 2;
pub const SATGATE_ERR_IO: c_int = 3;
pub const SATGATE_ERR_PARSE: c_int = 4;
pub const SATGATE_ERR_SCHEMA: c_int = 5;
pub const SATGATE_ERR_VALIDATION: c_int = 6;
pub const SATGATE_ERR_BOUNDS: c_int = 7;
pub const SATGATE_ERR_DOMAIN: c_int = 8;
pub const SATGATE_ERR_SHAPE: c_int = 9;
pub const SATGATE_ERR_CHECKPOINT: c_int = 10;
pub const SATGATE_ERR_UNDEFINED_METRIC: c_int = 11;
pub const SATGATE_ERR_BUFFER: c_int = 12;
pub const SATGATE_ERR_OTHER: c_int = 98;
pub const SATGATE_ERR_PANIC: c_int = 99;

pub const SATGATE_RESPOND: c_int = 0;
pub const SATGATE_CLARIFY: c_int = 1;

/// Trained satisfaction predictor loaded from a checkpoint.
pub struct SatgatePredictor(Predictor);

/// Weak labeler loaded from its JSON model file.
pub struct SatgateWeakLabeler(WeakLabeler);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code(e: &Error) -> c_int {
    match e {
        Error::Io { .. } => SATGATE_ERR_IO,
        Error::Parse { .. } => SATGATE_ERR_PARSE,
        Error::Schema { .. } => SATGATE_ERR_SCHEMA,
        Error::Validation(_) | Error::Config(_) | Error::DegenerateData(_) => SATGATE_ERR_VALIDATION,
        Error::Bounds { .. } => SATGATE_ERR_BOUNDS,
        Error::Domain(_) => SATGATE_ERR_DOMAIN,
        Error::Shape(_) => SATGATE_ERR_SHAPE,
        Error::Checkpoint(_) => SATGATE_ERR_CHECKPOINT,
        Error::UndefinedMetric(_) => SATGATE_ERR_UNDEFINED_METRIC,
        Error::NonFiniteLoss { .. } => SATGATE_ERR_OTHER,
    }
}

struct Fail(c_int, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(code(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SATGATE_OK,
        Ok(Err(Fail(c, msg))) => {
            set_error(&msg);
            c
        }
        Err(_) => {
            set_error("internal panic");
            SATGATE_ERR_PANIC
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(SATGATE_ERR_NULL, format!("{name} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SATGATE_ERR_UTF8, format!("{name} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn session_arg(p: *const c_char) -> Result<Session, Fail> {
    Ok(parse_session_line(str_arg(p, "session_json")?, 1)?)
}

/// Message describing the last failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn satgate_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn satgate_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a predictor checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn satgate_predictor_load(path: *const c_char, out: *mut *mut SatgatePredictor) -> c_int {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = Predictor::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(SatgatePredictor(p)));
        Ok(())
    })
}

/// Releases a predictor. Null is ignored.
///
/// # Safety
/// `predictor` must come from `satgate_predictor_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn satgate_predictor_free(predictor: *mut SatgatePredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Decision threshold stored in the predictor's config.
///
/// # Safety
/// `predictor` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn satgate_predictor_threshold(predictor: *const SatgatePredictor, out: *mut f64) -> c_int {
    guard(|| {
        let p = predictor.as_ref().ok_or_else(|| null("predictor"))?;
        *out_arg(out, "out")? = p.0.config.decision_threshold;
        Ok(())
    })
}

/// Satisfaction probability of turn `turn` of a session given as one JSON
/// line, using only that turn and the ones before it.
///
/// # Safety
/// `predictor` must be a live handle, `session_json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn satgate_predictor_score(
    predictor: *const SatgatePredictor,
    session_json: *const c_char,
    turn: usize,
    out: *mut f64,
) -> c_int {
    guard(|| {
        let p = predictor.as_ref().ok_or_else(|| null("predictor"))?;
        let out = out_arg(out, "out")?;
        let session = session_arg(session_json)?;
        *out = p.0.predict(&session, turn)?;
        Ok(())
    })
}

/// Scores every turn of a session into `out[0..capacity]`; the number of
/// turns is written to `out_len` even when `capacity` is too small (in which
/// case `SATGATE_ERR_BUFFER` is returned and `out` is untouched).
///
/// # Safety
/// `out` must have room for `capacity` doubles (may be null when capacity is 0).
#[no_mangle]
pub unsafe extern "C" fn satgate_predictor_score_session(
    predictor: *const SatgatePredictor,
    session_json: *const c_char,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> c_int {
    guard(|| {
        let p = predictor.as_ref().ok_or_else(|| null("predictor"))?;
        let len = out_arg(out_len, "out_len")?;
        let session = session_arg(session_json)?;
        *len = session.len();
        if capacity < session.len() {
            return Err(Fail(SATGATE_ERR_BUFFER, format!("need {} slots, have {capacity}", session.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let scores = p.0.predict_session(&session)?;
        std::slice::from_raw_parts_mut(out, scores.len()).copy_from_slice(&scores);
        Ok(())
    })
}

/// Loads a weak labeler model file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn satgate_weak_labeler_load(path: *const c_char, out: *mut *mut SatgateWeakLabeler) -> c_int {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let w = WeakLabeler::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(SatgateWeakLabeler(w)));
        Ok(())
    })
}

/// Releases a weak labeler. Null is ignored.
///
/// # Safety
/// `labeler` must come from `satgate_weak_labeler_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn satgate_weak_labeler_free(labeler: *mut SatgateWeakLabeler) {
    if !labeler.is_null() {
        drop(Box::from_raw(labeler));
    }
}

/// Weak label (posterior satisfaction) of turn `turn`, computed from that
/// turn and its neighbours.
///
/// # Safety
/// `labeler` must be a live handle, `session_json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn satgate_weak_label(
    labeler: *const SatgateWeakLabeler,
    session_json: *const c_char,
    turn: usize,
    out: *mut f64,
) -> c_int {
    guard(|| {
        let w = labeler.as_ref().ok_or_else(|| null("labeler"))?;
        let out = out_arg(out, "out")?;
        let session = session_arg(session_json)?;
        let fv = w.0.extractor.extract(&session, turn)?;
        *out = weak_label(&w.0.model, &fv);
        Ok(())
    })
}

/// Writes `SATGATE_CLARIFY` when `probability < threshold`, else `SATGATE_RESPOND`.
///
/// # Safety
/// `out_decision` must be writable.
#[no_mangle]
pub unsafe extern "C" fn satgate_gate(probability: f64, threshold: f64, out_decision: *mut c_int) -> c_int {
    guard(|| {
        let out = out_arg(out_decision, "out_decision")?;
        *out = match gate_sim::gate(probability, threshold)?.decision {
            Decision::Clarify => SATGATE_CLARIFY,
            Decision::Respond => SATGATE_RESPOND,
        };
        Ok(())
    })
}

/// Contextual satisfaction of a clarification turn: `rating_n * rating_next`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn satgate_cus(rating_n: f64, rating_next: f64, out: *mut f64) -> c_int {
    guard(|| {
        *out_arg(out, "out")? = evalmetrics::cus(rating_n, rating_next)?.contextual;
        Ok(())
    })
}

/// ROC AUC of `scores` against 0/1 `labels`, both of length `n`.
///
/// # Safety
/// `scores` and `labels` must point to `n` readable elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn satgate_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> c_int {
    guard(|| {
        let out = out_arg(out, "out")?;
        if n > 0 && (scores.is_null() || labels.is_null()) {
            return Err(null("scores/labels"));
        }
        let (s, l) = if n == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(scores, n), std::slice::from_raw_parts(labels, n))
        };
        if l.iter().any(|&v| v > 1) {
            return Err(Fail(SATGATE_ERR_DOMAIN, "labels must be 0 or 1".into()));
        }
        *out = evalmetrics::auc(s, l)?;
        Ok(())
    })
}
