//! C ABI over the strokescreen engine.
//!
//! Every function returns an [`SsStatus`]. On failure the message is kept in
//! a thread-local buffer readable through [`ss_last_error`] until the next
//! call on the same thread. Handles are opaque and must be released with
//! their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use strokescreen::detect::{DetectError, ModelSet};
use strokescreen::fusion::{FusionInput, Modality};
use strokescreen::metrics::{compute_metrics, f_score, ConfusionMatrix};
use strokescreen::vitals::VitalsSample;
use strokescreen::Confidence;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    /// A required pointer was null.
    NullArgument = 1,
    /// An argument is out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// A file could not be read or a model file is malformed.
    Io = 3,
    /// Input bytes could not be decoded for their modality.
    Decode = 4,
    /// A model rejected its input.
    Model = 5,
    /// Rust code panicked; the message is in the last error.
    Panic = 6,
}

/// Loaded detector and fusion models.
pub struct SsEngine {
    models: ModelSet,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SsVitals {
    pub timestamp_ms: i64,
    pub systolic: f64,
    pub diastolic: f64,
    pub heart_rate: f64,
    pub spo2: f64,
}

/// Per-modality confidences; NaN marks a missing modality.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SsFusionInput {
    pub vocal: f64,
    pub vascular: f64,
    pub retina: f64,
    pub face: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SsDiagnosis {
    pub at_risk: bool,
    pub risk_percent: f64,
    /// In the order vocal, vascular, retina, face.
    pub contributions: [f64; 4],
    /// Bit i set when coordinate i was imputed.
    pub imputed_mask: u32,
}

/// Undefined ratios are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SsMetrics {
    pub precision: f64,
    pub sensitivity: f64,
    pub f_beta: f64,
    pub accuracy: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|b| *b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SsStatus, String);

fn detect_failure(e: DetectError) -> Failure {
    let status = match &e {
        DetectError::File { .. } | DetectError::NotNetwork(_) => SsStatus::Io,
        DetectError::Audio(_) | DetectError::Image(_) | DetectError::Face(_) => SsStatus::Decode,
        _ => SsStatus::Model,
    };
    Failure(status, e.to_string())
}

fn null(what: &str) -> Failure {
    Failure(SsStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SsStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SsStatus::Panic
        }
    }
}

unsafe fn engine_ref<'a>(engine: *const SsEngine) -> Result<&'a SsEngine, Failure> {
    engine.as_ref().ok_or_else(|| null("engine"))
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(value);
    Ok(())
}

/// Message describing the last failure on this thread; empty after success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn ss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads `<modality>.ssmd` for all five modalities from `models_dir`.
///
/// # Safety
/// `models_dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_engine_open(models_dir: *const c_char, out: *mut *mut SsEngine) -> SsStatus {
    guard(|| {
        if models_dir.is_null() {
            return Err(null("models_dir"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        out.write(ptr::null_mut());
        let dir = CStr::from_ptr(models_dir)
            .to_str()
            .map_err(|_| Failure(SsStatus::InvalidArgument, "models_dir is not UTF-8".into()))?;
        let models = ModelSet::load(Path::new(dir)).map_err(detect_failure)?;
        out.write(Box::into_raw(Box::new(SsEngine { models })));
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from [`ss_engine_open`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_engine_free(engine: *mut SsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

unsafe fn score(
    engine: *const SsEngine,
    data: *const u8,
    len: usize,
    out: *mut f64,
    f: impl FnOnce(&ModelSet, &[u8]) -> Result<Confidence, DetectError>,
) -> SsStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let b = bytes(data, len)?;
        let c = f(&e.models, b).map_err(detect_failure)?;
        write_out(out, c.value())
    })
}

/// Slurred-speech confidence for a 16-bit PCM WAV file.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_voice_confidence(
    engine: *const SsEngine,
    data: *const u8,
    len: usize,
    out: *mut f64,
) -> SsStatus {
    score(engine, data, len, out, ModelSet::voice_from_wav)
}

/// Facial-paralysis confidence for a 68-point landmark file.
///
/// # Safety
/// As for [`ss_voice_confidence`].
#[no_mangle]
pub unsafe extern "C" fn ss_face_confidence(
    engine: *const SsEngine,
    data: *const u8,
    len: usize,
    out: *mut f64,
) -> SsStatus {
    score(engine, data, len, out, ModelSet::face_from_pts)
}

/// Retinopathy confidence for a binary PGM or PPM image.
///
/// # Safety
/// As for [`ss_voice_confidence`].
#[no_mangle]
pub unsafe extern "C" fn ss_retina_confidence(
    engine: *const SsEngine,
    data: *const u8,
    len: usize,
    out: *mut f64,
) -> SsStatus {
    score(engine, data, len, out, ModelSet::retina_from_image)
}

/// Vascular-risk confidence for one vitals sample.
///
/// # Safety
/// `sample` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_vascular_confidence(
    engine: *const SsEngine,
    sample: *const SsVitals,
    out: *mut f64,
) -> SsStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let s = sample.as_ref().ok_or_else(|| null("sample"))?;
        let sample = VitalsSample {
            timestamp_ms: s.timestamp_ms,
            systolic: s.systolic,
            diastolic: s.diastolic,
            heart_rate: s.heart_rate,
            spo2: s.spo2,
        };
        sample.check().map_err(|m| Failure(SsStatus::InvalidArgument, m))?;
        let c = e.models.vascular(&sample).map_err(detect_failure)?;
        write_out(out, c.value())
    })
}

fn confidence(v: f64, name: &str) -> Result<Option<Confidence>, Failure> {
    if v.is_nan() {
        return Ok(None);
    }
    Confidence::new(v)
        .map(Some)
        .map_err(|e| Failure(SsStatus::InvalidArgument, format!("{name}: {e}")))
}

/// Fuses the confidences into a diagnosis. Vascular is required; other
/// missing (NaN) modalities are imputed.
///
/// # Safety
/// `input` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ss_fuse(
    engine: *const SsEngine,
    input: *const SsFusionInput,
    out: *mut SsDiagnosis,
) -> SsStatus {
    guard(|| {
        let e = engine_ref(engine)?;
        let i = input.as_ref().ok_or_else(|| null("input"))?;
        let fi = FusionInput {
            vocal: confidence(i.vocal, "vocal")?,
            vascular: confidence(i.vascular, "vascular")?,
            retina: confidence(i.retina, "retina")?,
            face: confidence(i.face, "face")?,
        };
        let d = e.models.fuse(&fi).map_err(detect_failure)?;
        let mut contributions = [0.0; 4];
        contributions.copy_from_slice(&d.contributions);
        let imputed_mask = Modality::ORDER
            .iter()
            .enumerate()
            .filter(|(_, m)| d.imputed.contains(m))
            .fold(0u32, |acc, (k, _)| acc | 1 << k);
        write_out(
            out,
            SsDiagnosis {
                at_risk: d.at_risk,
                risk_percent: d.risk_percent,
                contributions,
                imputed_mask,
            },
        )
    })
}

/// Precision, sensitivity, F-beta and accuracy of a confusion matrix.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ss_compute_metrics(tp: u64, fp: u64, fn_: u64, tn: u64, out: *mut SsMetrics) -> SsStatus {
    guard(|| {
        let m = compute_metrics(&ConfusionMatrix::new(tp, fp, fn_, tn))
            .map_err(|e| Failure(SsStatus::InvalidArgument, e.to_string()))?;
        write_out(
            out,
            SsMetrics {
                precision: m.precision.unwrap_or(f64::NAN),
                sensitivity: m.sensitivity.unwrap_or(f64::NAN),
                f_beta: m.f_beta.unwrap_or(f64::NAN),
                accuracy: m.accuracy,
            },
        )
    })
}

/// Harmonic mean of precision and sensitivity; zero if either is zero.
#[no_mangle]
pub extern "C" fn ss_f_score(precision: f64, sensitivity: f64) -> f64 {
    f_score(precision, sensitivity)
}
