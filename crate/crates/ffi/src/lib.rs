//! C ABI for `rloco`.
//!
//! Objects cross the boundary as opaque handles created by a `*_new`,
//! `*_from_json` or `*_fit` function and released by the matching `*_free`.
//! Every fallible function returns an [`RlocoStatus`]; on failure
//! [`rloco_last_error_message`] describes the error for the calling thread.
//! Output buffers are caller-allocated with the length stated per function.
//! Panics never unwind into C; they surface as `RLOCO_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rloco::pwl::PiecewiseLinearModel;
use rloco::regions::{RlocoConfig, RlocoPipeline as Pipeline};
use rloco::{Dataset, Error, Task};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlocoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Parse = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlocoTask {
    Regression = 0,
    BinaryClassification = 1,
}

/// Tabular data: an `n x p` feature matrix and a target.
pub struct RlocoDataset {
    inner: Dataset,
}

/// A piecewise-linear model over `U[-1, 1]` features.
pub struct RlocoPwlModel {
    inner: PiecewiseLinearModel,
}

/// A fitted R-LOCO pipeline.
pub struct RlocoPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(RlocoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> RlocoStatus {
    match e {
        Error::DimensionMismatch { .. } => RlocoStatus::DimensionMismatch,
        Error::NonFinite(_) | Error::Singular(_) => RlocoStatus::Numerical,
        Error::Json(_) | Error::Csv(_) | Error::MissingHeader | Error::NonNumericCell { .. } => RlocoStatus::Parse,
        Error::Learner { source, .. } => status_of(source),
        _ => RlocoStatus::InvalidArgument,
    }
}

fn null(what: &str) -> Failure {
    Failure(RlocoStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RlocoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RlocoStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RlocoStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(RlocoStatus::Parse, format!("{what} is not UTF-8: {e}")))
}

fn check_len(expected: usize, got: usize) -> Result<(), Failure> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got }.into());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rloco_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rloco_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from a `rloco_*_to_json` call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rloco_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copies a row-major `n x p` feature matrix and an `n`-vector target.
/// `task` is an [`RlocoTask`] value. Features are named `x1..xp`.
///
/// # Safety
/// `features` must point to `n * p` doubles, `target` to `n`, `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rloco_dataset_new(
    features: *const f64,
    n: usize,
    p: usize,
    target: *const f64,
    task: c_int,
    out: *mut *mut RlocoDataset,
) -> RlocoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cells = n.checked_mul(p).ok_or_else(|| Failure(RlocoStatus::InvalidArgument, "n * p overflows".into()))?;
        let x = slice(features, cells, "features")?;
        let y = slice(target, n, "target")?;
        let task = match task {
            t if t == RlocoTask::Regression as c_int => Task::Regression,
            t if t == RlocoTask::BinaryClassification as c_int => Task::BinaryClassification,
            t => return Err(Failure(RlocoStatus::InvalidArgument, format!("unknown task {t}"))),
        };
        let x = ndarray::Array2::from_shape_vec((n, p), x.to_vec())
            .map_err(|e| Failure(RlocoStatus::InvalidArgument, e.to_string()))?;
        let d = Dataset::from_rows(x, ndarray::Array1::from(y.to_vec()), task)?;
        *out = Box::into_raw(Box::new(RlocoDataset { inner: d }));
        Ok(())
    })
}

/// # Safety
/// `data` must come from [`rloco_dataset_new`]; `n` and `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_dataset_shape(data: *const RlocoDataset, n: *mut usize, p: *mut usize) -> RlocoStatus {
    guard(|| {
        let d = handle(data, "data")?;
        if n.is_null() || p.is_null() {
            return Err(null("n or p"));
        }
        *n = d.inner.n();
        *p = d.inner.p();
        Ok(())
    })
}

/// # Safety
/// `data` must be null or come from [`rloco_dataset_new`], and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rloco_dataset_free(data: *mut RlocoDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Parses a model from its JSON form: `regions` (per region, one `[lo, hi]`
/// pair per feature, nulls for unbounded ends), `coefficients` and `intercepts`.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_pwl_from_json(json: *const c_char, out: *mut *mut RlocoPwlModel) -> RlocoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = PiecewiseLinearModel::from_json(string(json, "json")?)?;
        *out = Box::into_raw(Box::new(RlocoPwlModel { inner: m }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`rloco_pwl_from_json`]; `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_pwl_dim(model: *const RlocoPwlModel, p: *mut usize) -> RlocoStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if p.is_null() {
            return Err(null("p"));
        }
        *p = m.inner.p();
        Ok(())
    })
}

/// Evaluates the model at `x` (length `p`).
///
/// # Safety
/// `x` must point to `p` doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn rloco_pwl_evaluate(
    model: *const RlocoPwlModel,
    x: *const f64,
    p: usize,
    out: *mut f64,
) -> RlocoStatus {
    guard(|| {
        let m = handle(model, "model")?;
        check_len(m.inner.p(), p)?;
        let x = slice(x, p, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.inner.evaluate(x)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from [`rloco_pwl_from_json`], and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rloco_pwl_free(model: *mut RlocoPwlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn lsv(
    model: *const RlocoPwlModel,
    x: *const f64,
    p: usize,
    out: *mut f64,
    f: fn(&PiecewiseLinearModel, &[f64]) -> rloco::Result<rloco::AttributionVector>,
) -> RlocoStatus {
    guard(|| {
        let m = handle(model, "model")?;
        check_len(m.inner.p(), p)?;
        let x = slice(x, p, "x")?;
        let out = slice_mut(out, p, "out")?;
        out.copy_from_slice(&f(&m.inner, x)?.scores);
        Ok(())
    })
}

/// Exact local Shapley values in closed form; writes `p` scores to `out`.
///
/// # Safety
/// `x` and `out` must each point to `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn rloco_lsv_closed_form(
    model: *const RlocoPwlModel,
    x: *const f64,
    p: usize,
    out: *mut f64,
) -> RlocoStatus {
    lsv(model, x, p, out, rloco::shapley::lsv_closed_form)
}

/// Exact local Shapley values by enumerating all `2^p` coalitions (p <= 20).
///
/// # Safety
/// `x` and `out` must each point to `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn rloco_lsv_enumeration(
    model: *const RlocoPwlModel,
    x: *const f64,
    p: usize,
    out: *mut f64,
) -> RlocoStatus {
    lsv(model, x, p, out, rloco::shapley::lsv_enumeration)
}

/// Fits LOCO models on `fit`, computes calibration deltas on `calibration`
/// and clusters them. `config_json` is a JSON pipeline configuration with
/// keys `learner`, `cluster`, `assignment`, `metric` and `seed`; null or
/// missing keys take the defaults.
///
/// # Safety
/// Handles must be valid; `config_json` must be null or nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_pipeline_fit(
    fit: *const RlocoDataset,
    calibration: *const RlocoDataset,
    config_json: *const c_char,
    out: *mut *mut RlocoPipeline,
) -> RlocoStatus {
    guard(|| {
        let fit = handle(fit, "fit")?;
        let cal = handle(calibration, "calibration")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config: RlocoConfig = if config_json.is_null() {
            RlocoConfig::default()
        } else {
            serde_json::from_str(string(config_json, "config_json")?).map_err(Error::from)?
        };
        let pipe = Pipeline::fit(&fit.inner, &cal.inner, &config, None)?;
        *out = Box::into_raw(Box::new(RlocoPipeline { inner: pipe }));
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_pipeline_n_clusters(pipeline: *const RlocoPipeline, out: *mut usize) -> RlocoStatus {
    guard(|| {
        let pipe = handle(pipeline, "pipeline")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = pipe.inner.n_regions();
        Ok(())
    })
}

/// Regional attribution of `x`. `y` may be null, in which case the model's
/// prediction stands in for the label. Writes `p` scores to `scores`, the
/// cluster index to `cluster` and 1 to `undecidable` when the point tied
/// between clusters (it is then assigned to the lowest tied index).
///
/// # Safety
/// `x` and `scores` must point to `p` doubles; `y` must be null or point to one double;
/// `cluster` and `undecidable` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_pipeline_explain(
    pipeline: *const RlocoPipeline,
    x: *const f64,
    p: usize,
    y: *const f64,
    scores: *mut f64,
    cluster: *mut usize,
    undecidable: *mut c_int,
) -> RlocoStatus {
    guard(|| {
        let pipe = handle(pipeline, "pipeline")?;
        check_len(pipe.inner.p(), p)?;
        let x = slice(x, p, "x")?;
        let out = slice_mut(scores, p, "scores")?;
        if cluster.is_null() || undecidable.is_null() {
            return Err(null("cluster or undecidable"));
        }
        let e = pipe.inner.explain(x, y.as_ref().copied())?;
        out.copy_from_slice(&e.attribution.scores);
        *cluster = e.region;
        *undecidable = c_int::from(e.undecidable.is_some());
        Ok(())
    })
}

/// Serializes the pipeline; free the result with [`rloco_string_free`].
///
/// # Safety
/// `pipeline` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_pipeline_to_json(pipeline: *const RlocoPipeline, out: *mut *mut c_char) -> RlocoStatus {
    guard(|| {
        let pipe = handle(pipeline, "pipeline")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = CString::new(pipe.inner.to_json()?).expect("JSON has no nul bytes");
        *out = s.into_raw();
        Ok(())
    })
}

/// # Safety
/// `json` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_pipeline_from_json(json: *const c_char, out: *mut *mut RlocoPipeline) -> RlocoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pipe = Pipeline::from_json(string(json, "json")?)?;
        *out = Box::into_raw(Box::new(RlocoPipeline { inner: pipe }));
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be null or valid, and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn rloco_pipeline_free(pipeline: *mut RlocoPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// `|s| / sum |s|` into `out`. An all-zero input yields the uniform vector and
/// sets `degenerate` to 1.
///
/// # Safety
/// `scores` and `out` must point to `p` doubles; `degenerate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rloco_normalize(
    scores: *const f64,
    p: usize,
    out: *mut f64,
    degenerate: *mut c_int,
) -> RlocoStatus {
    guard(|| {
        let s = slice(scores, p, "scores")?;
        let out = slice_mut(out, p, "out")?;
        if degenerate.is_null() {
            return Err(null("degenerate"));
        }
        if p == 0 {
            return Err(Failure(RlocoStatus::InvalidArgument, "p must be positive".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scores".into()).into());
        }
        let n = rloco::normalize(s);
        out.copy_from_slice(&n.values);
        *degenerate = c_int::from(n.degenerate);
        Ok(())
    })
}
