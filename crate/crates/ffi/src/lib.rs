//! C ABI over the `angcn` library.
//!
//! Objects cross the boundary as opaque handles. Release each one with the
//! matching `*_free` function. Every fallible call
//! returns an [`AngcnStatus`]; on failure the message is available from
//! [`angcn_last_error`] until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use angcn::cli::evaluate_checkpoint;
use angcn::data::{self, Checkpoint, DatasetBundle, SyntheticSpec};
use angcn::evaluation;
use angcn::experiments;
use angcn::metrics::{self, EvalReport};
use angcn::training::TrainConfig;
use angcn::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AngcnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Parse = 5,
    Schema = 6,
    Numerical = 7,
    Shape = 8,
    Panic = 9,
}

/// Scalar metrics of one evaluation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AngcnReport {
    pub accuracy: f64,
    pub auc: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub kappa: f64,
    pub mcc: f64,
}

impl From<&EvalReport> for AngcnReport {
    fn from(r: &EvalReport) -> Self {
        AngcnReport {
            accuracy: r.accuracy,
            auc: r.auc,
            f1: r.f1,
            recall: r.recall,
            precision: r.precision,
            kappa: r.kappa,
            mcc: r.mcc,
        }
    }
}

/// Opaque dataset handle.
pub struct AngcnBundle(DatasetBundle);

/// Opaque checkpoint handle.
pub struct AngcnCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AngcnStatus {
    match e {
        Error::Io { .. } => AngcnStatus::Io,
        Error::Parse { .. } | Error::Json { .. } => AngcnStatus::Parse,
        Error::SchemaMismatch(_) => AngcnStatus::Schema,
        Error::ShapeMismatch { .. } | Error::LengthMismatch { .. } | Error::TraceMismatch(_) => {
            AngcnStatus::Shape
        }
        Error::NonFinite(_)
        | Error::SingularSystem { .. }
        | Error::ZeroDegree(_)
        | Error::DegenerateVector { .. } => AngcnStatus::Numerical,
        Error::Layer { source, .. } => status_of(source),
        _ => AngcnStatus::InvalidInput,
    }
}

enum Failure {
    Status(AngcnStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AngcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AngcnStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Err(_) => {
            set_last_error("internal panic".into());
            AngcnStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(AngcnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(AngcnStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn angcn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn angcn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset bundle directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn angcn_bundle_load(path: *const c_char, out: *mut *mut AngcnBundle) -> AngcnStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let bundle = data::load_bundle(&PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(AngcnBundle(bundle)));
        Ok(())
    })
}

/// Generates the synthetic bundle with default settings except size and seed.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn angcn_bundle_synthetic(
    n_subjects: usize,
    seed: u64,
    out: *mut *mut AngcnBundle,
) -> AngcnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let bundle = data::generate_synthetic(&SyntheticSpec {
            n_subjects,
            seed,
            ..Default::default()
        })?;
        *out = Box::into_raw(Box::new(AngcnBundle(bundle)));
        Ok(())
    })
}

/// Writes the bundle files into `dir`.
///
/// # Safety
/// `bundle` must come from this library and `dir` be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn angcn_bundle_save(bundle: *const AngcnBundle, dir: *const c_char) -> AngcnStatus {
    guard(|| {
        let bundle = ref_arg(bundle, "bundle")?;
        let dir = str_arg(dir, "dir")?;
        data::save_bundle(&bundle.0, &PathBuf::from(dir))?;
        Ok(())
    })
}

/// Number of subjects, or 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn angcn_bundle_len(bundle: *const AngcnBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.0.len())
}

/// Number of imaging features per subject, or 0 for a null handle.
///
/// # Safety
/// `bundle` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn angcn_bundle_feature_count(bundle: *const AngcnBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.0.features.cols())
}

/// Releases a bundle handle; null is ignored.
///
/// # Safety
/// `bundle` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn angcn_bundle_free(bundle: *mut AngcnBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Runs k-fold cross-validation and stores the mean fold metrics in `out`.
/// `config_json` may be null (defaults) or a JSON object of config fields.
///
/// # Safety
/// `bundle` must come from this library, `config_json` be null or a
/// NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn angcn_cross_validate(
    bundle: *const AngcnBundle,
    config_json: *const c_char,
    out: *mut AngcnReport,
) -> AngcnStatus {
    guard(|| {
        let bundle = ref_arg(bundle, "bundle")?;
        let out = out_arg(out, "out")?;
        let config: TrainConfig = if config_json.is_null() {
            TrainConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| Failure::Status(AngcnStatus::Parse, format!("config: {e}")))?
        };
        let (_, cv) = evaluation::run_cv(&bundle.0, &config)?;
        let m = cv.metrics.mean;
        *out = AngcnReport {
            accuracy: m.accuracy,
            auc: m.auc,
            f1: m.f1,
            recall: m.recall,
            precision: m.precision,
            kappa: m.kappa,
            mcc: m.mcc,
        };
        Ok(())
    })
}

/// Loads a checkpoint written by `angcn train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn angcn_checkpoint_load(
    path: *const c_char,
    out: *mut *mut AngcnCheckpoint,
) -> AngcnStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        let ck = Checkpoint::load(&PathBuf::from(path))?;
        *out = Box::into_raw(Box::new(AngcnCheckpoint(ck)));
        Ok(())
    })
}

/// Scores the checkpoint on its own test fold of `bundle`.
///
/// # Safety
/// Handles must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn angcn_checkpoint_evaluate(
    checkpoint: *const AngcnCheckpoint,
    bundle: *const AngcnBundle,
    out: *mut AngcnReport,
) -> AngcnStatus {
    guard(|| {
        let ck = ref_arg(checkpoint, "checkpoint")?;
        let bundle = ref_arg(bundle, "bundle")?;
        let out = out_arg(out, "out")?;
        *out = AngcnReport::from(&evaluate_checkpoint(&ck.0, &bundle.0)?);
        Ok(())
    })
}

/// Releases a checkpoint handle; null is ignored.
///
/// # Safety
/// `checkpoint` must be null or an unreleased handle from this library.
#[no_mangle]
pub unsafe extern "C" fn angcn_checkpoint_free(checkpoint: *mut AngcnCheckpoint) {
    if !checkpoint.is_null() {
        drop(Box::from_raw(checkpoint));
    }
}

/// Metrics of positive-class `scores` against binary `labels`, both of
/// length `n`; predictions threshold at 0.5.
///
/// # Safety
/// `scores` and `labels` must point to `n` readable elements and `out` be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn angcn_evaluate_scores(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut AngcnReport,
) -> AngcnStatus {
    guard(|| {
        if scores.is_null() {
            return Err(null("scores"));
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        let out = out_arg(out, "out")?;
        let scores = std::slice::from_raw_parts(scores, n);
        let labels: Vec<usize> = std::slice::from_raw_parts(labels, n)
            .iter()
            .map(|&l| usize::from(l))
            .collect();
        *out = AngcnReport::from(&metrics::evaluate(scores, &labels)?);
        Ok(())
    })
}

/// Runs the finite-difference gradient check and stores the largest
/// relative error in `max_relative_error`.
///
/// # Safety
/// `max_relative_error` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn angcn_gradcheck(seed: u64, max_relative_error: *mut f64) -> AngcnStatus {
    guard(|| {
        let out = out_arg(max_relative_error, "max_relative_error")?;
        *out = experiments::gradcheck(seed)?.max_relative_error;
        Ok(())
    })
}
