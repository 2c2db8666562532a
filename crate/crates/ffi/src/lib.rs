//! C ABI over the ledgercast library.
//!
//! Conventions: every fallible function returns an [`LcStatus`]; on failure
//! [`lc_last_error_message`] describes the error until the next call on the
//! same thread. Handles are opaque and freed with their `_free` function.
//! Strings returned through `char **` are owned by the caller and released
//! with [`lc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ledgercast::eval::{self, FoldScore, LossWeights};
use ledgercast::pipeline::{self, CompareReport, PipelineConfig};
use ledgercast::synthgen::{self, SynthConfig};
use ledgercast::dataset::Dataset;
use ledgercast::{Error, ErrorKind};

/// Status codes; the numeric values of the library error classes match the
/// CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcStatus {
    Ok = 0,
    Io = 1,
    Validation = 2,
    Data = 3,
    Numerical = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque dataset handle.
pub struct LcDataset {
    inner: Dataset,
}

/// Opaque H1/H2 comparison report handle.
pub struct LcReport {
    inner: CompareReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> LcStatus {
    match e.kind() {
        ErrorKind::Validation => LcStatus::Validation,
        ErrorKind::Data => LcStatus::Data,
        ErrorKind::Numerical => LcStatus::Numerical,
        ErrorKind::Io => LcStatus::Io,
    }
}

enum Failure {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LcStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LcStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} must not be null"));
            LcStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic");
            LcStatus::Panic
        }
    }
}

unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Failure::Lib(Error::Validation("string argument is not valid UTF-8".into())))
}

unsafe fn req_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    opt_str(p)?.ok_or(Failure::Null(what))
}

unsafe fn config_from(toml: *const c_char) -> Result<PipelineConfig, Failure> {
    Ok(match opt_str(toml)? {
        Some(s) => PipelineConfig::from_toml_str(s)?,
        None => PipelineConfig::default(),
    })
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure::Lib(Error::Validation("output contains a nul byte".into())))?;
    write_out(out, c.into_raw())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string(v).map_err(|e| Failure::Lib(e.into()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn lc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn lc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a synthetic dataset. `synth_toml` may be null for the pinned
/// default configuration; `seed` always overrides the configured seed.
///
/// # Safety
/// `synth_toml` is null or a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_generate(synth_toml: *const c_char, seed: u64, out: *mut *mut LcDataset) -> LcStatus {
    guard(|| {
        let cfg = match opt_str(synth_toml)? {
            Some(s) => SynthConfig::from_toml_str(s)?,
            None => SynthConfig::default(),
        }
        .with_seed(seed);
        let inner = synthgen::generate(&cfg)?;
        write_out(out, Box::into_raw(Box::new(LcDataset { inner })))
    })
}

/// Loads `invoices.csv` and an optional `support.csv` (null to skip).
/// `config_toml` may be null; it supplies the fiscal calendar.
///
/// # Safety
/// String arguments are null or nul-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_load(
    invoices_path: *const c_char,
    support_path: *const c_char,
    config_toml: *const c_char,
    out: *mut *mut LcDataset,
) -> LcStatus {
    guard(|| {
        let inv = req_str(invoices_path, "invoices_path")?;
        let sup = opt_str(support_path)?;
        let cfg = config_from(config_toml)?;
        let inner = pipeline::ingest(Path::new(inv), sup.map(Path::new), &cfg.calendar())?;
        write_out(out, Box::into_raw(Box::new(LcDataset { inner })))
    })
}

/// Writes `invoices.csv` and `support.csv` into `directory`.
///
/// # Safety
/// `dataset` is a live handle; `directory` is nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_export(dataset: *const LcDataset, directory: *const c_char, config_toml: *const c_char) -> LcStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or(Failure::Null("dataset"))?;
        let dir = req_str(directory, "directory")?;
        let cfg = config_from(config_toml)?;
        synthgen::export(&ds.inner, Path::new(dir), &cfg.calendar())?;
        Ok(())
    })
}

/// Number of invoices in the dataset.
///
/// # Safety
/// `dataset` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_invoice_count(dataset: *const LcDataset, out: *mut usize) -> LcStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or(Failure::Null("dataset"))?;
        write_out(out, ds.inner.invoices.len())
    })
}

/// Frees a dataset handle. Null is ignored.
///
/// # Safety
/// `dataset` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_dataset_free(dataset: *mut LcDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Forecast from the last observed week as a JSON run report; with
/// `evaluate` nonzero the rolling evaluation is included.
///
/// # Safety
/// `dataset` is a live handle; `config_toml` is null or nul-terminated;
/// `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_forecast_json(
    dataset: *const LcDataset,
    config_toml: *const c_char,
    evaluate: i32,
    out_json: *mut *mut c_char,
) -> LcStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or(Failure::Null("dataset"))?;
        let cfg = config_from(config_toml)?;
        let report = pipeline::run(&ds.inner, &cfg, evaluate != 0)?;
        write_string(out_json, to_json(&report)?)
    })
}

/// Runs H1 and H2 on identical folds.
///
/// # Safety
/// `dataset` is a live handle; `config_toml` is null or nul-terminated;
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_compare(dataset: *const LcDataset, config_toml: *const c_char, out: *mut *mut LcReport) -> LcStatus {
    guard(|| {
        let ds = dataset.as_ref().ok_or(Failure::Null("dataset"))?;
        let cfg = config_from(config_toml)?;
        let inner = pipeline::compare(&ds.inner, &cfg)?;
        write_out(out, Box::into_raw(Box::new(LcReport { inner })))
    })
}

/// Accuracy uplift of H2 over H1, in percent.
///
/// # Safety
/// `report` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_report_uplift(report: *const LcReport, out: *mut f64) -> LcStatus {
    guard(|| {
        let r = report.as_ref().ok_or(Failure::Null("report"))?;
        write_out(out, r.inner.uplift_pct)
    })
}

/// Final score of H1 (`variant` 1) or H2 (`variant` 2).
///
/// # Safety
/// `report` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_report_final_score(report: *const LcReport, variant: i32, out: *mut f64) -> LcStatus {
    guard(|| {
        let r = report.as_ref().ok_or(Failure::Null("report"))?;
        let run = match variant {
            1 => &r.inner.h1,
            2 => &r.inner.h2,
            v => return Err(Error::Validation(format!("variant must be 1 or 2, got {v}")).into()),
        };
        let e = run.evaluation.as_ref().ok_or_else(|| Error::State("report has no evaluation".into()))?;
        write_out(out, e.final_score)
    })
}

/// The full comparison report as JSON.
///
/// # Safety
/// `report` is a live handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_report_json(report: *const LcReport, out_json: *mut *mut c_char) -> LcStatus {
    guard(|| {
        let r = report.as_ref().ok_or(Failure::Null("report"))?;
        write_string(out_json, to_json(&r.inner)?)
    })
}

/// Frees a report handle. Null is ignored.
///
/// # Safety
/// `report` comes from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lc_report_free(report: *mut LcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Mean absolute percentage error over `n` aligned values.
///
/// # Safety
/// `actual` and `predicted` point to `n` readable doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_mape(actual: *const f64, predicted: *const f64, n: usize, out: *mut f64) -> LcStatus {
    guard(|| {
        let a = slice(actual, n, "actual")?;
        let p = slice(predicted, n, "predicted")?;
        write_out(out, eval::mape_values(a, p)?)
    })
}

/// Variance-weighted score of `n` fold MAPEs with normalized weights.
///
/// # Safety
/// `mapes` and `weights` point to `n` readable doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_variance_weighted_score(
    mapes: *const f64,
    weights: *const f64,
    n: usize,
    alpha: f64,
    out: *mut f64,
) -> LcStatus {
    guard(|| {
        let m = slice(mapes, n, "mapes")?;
        let w = slice(weights, n, "weights")?;
        let folds: Vec<FoldScore> = m
            .iter()
            .zip(w)
            .enumerate()
            .map(|(i, (&mape, &weight))| FoldScore { fold_index: i + 1, mape, weight })
            .collect();
        write_out(out, eval::variance_weighted_score(&folds, alpha)?)
    })
}

/// Custom loss `α·Ē_w + (1 − α)·σ_w` over `n` fold errors.
///
/// # Safety
/// `errors` and `weights` point to `n` readable doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_custom_loss(errors: *const f64, weights: *const f64, n: usize, alpha: f64, out: *mut f64) -> LcStatus {
    guard(|| {
        let e = slice(errors, n, "errors")?;
        let w = slice(weights, n, "weights")?;
        let lw = LossWeights { weights: w.to_vec(), alpha };
        write_out(out, eval::custom_loss(e, &lw)?)
    })
}

/// `(baseline − proposed) / baseline · 100`.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn lc_accuracy_uplift(error_baseline: f64, error_proposed: f64, out: *mut f64) -> LcStatus {
    guard(|| write_out(out, eval::accuracy_uplift(error_baseline, error_proposed)?))
}
