//! C ABI over the dumcal calibration laboratory.
//!
//! Every function returns a [`DumcalStatus`]. On failure a description is
//! kept per thread and read with [`dumcal_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dumcal::cli::{load_config, log_to_csv, read_log, write_atomic};
use dumcal::harness::{ensemble, make_dataset, train, PredictionLog};
use dumcal::metrics::{CalibrationReport, PredictionRecord};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumcalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Train = 5,
    Metrics = 6,
    Panic = 7,
}

/// Scalar metrics of a record set.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DumcalMetrics {
    pub bacc: f64,
    pub ece: f64,
    pub aece: f64,
    pub mce: f64,
    pub oe: f64,
    pub brier: f64,
    pub n_bins: usize,
    pub n_samples: usize,
}

/// Owned set of prediction records keyed by sample id.
pub struct DumcalRecords {
    log: PredictionLog,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(DumcalStatus, String);

fn fail(status: DumcalStatus, msg: impl ToString) -> Failure {
    Failure(status, msg.to_string())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DumcalStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            DumcalStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DumcalStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(DumcalStatus::NullPointer, format!("{name} is null")));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(DumcalStatus::InvalidArgument, format!("{name} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn records_ref<'a>(h: *const DumcalRecords) -> Result<&'a DumcalRecords, Failure> {
    unsafe { h.as_ref() }.ok_or_else(|| fail(DumcalStatus::NullPointer, "records handle is null"))
}

fn out_handle(out: *mut *mut DumcalRecords, log: PredictionLog) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(DumcalStatus::NullPointer, "output pointer is null"));
    }
    unsafe { *out = Box::into_raw(Box::new(DumcalRecords { log })) };
    Ok(())
}

fn metrics_of(log: &PredictionLog, n_bins: usize) -> Result<DumcalMetrics, Failure> {
    let r = CalibrationReport::compute(&log.records, n_bins).map_err(|e| fail(DumcalStatus::Metrics, e))?;
    Ok(DumcalMetrics {
        bacc: r.bacc,
        ece: r.ece,
        aece: r.aece,
        mce: r.mce,
        oe: r.oe,
        brier: r.brier,
        n_bins: r.n_bins,
        n_samples: r.n_samples,
    })
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dumcal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dumcal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an empty record set.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn dumcal_records_new(out: *mut *mut DumcalRecords) -> DumcalStatus {
    guard(|| {
        out_handle(
            out,
            PredictionLog {
                ids: Vec::new(),
                records: Vec::new(),
            },
        )
    })
}

/// Appends one prediction. The record's id is its position; the predicted
/// class and confidence are taken from `probs`.
///
/// # Safety
/// `records` must come from this library; `probs` must point to
/// `n_classes` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn dumcal_records_push(
    records: *mut DumcalRecords,
    probs: *const f64,
    n_classes: usize,
    label: usize,
    uncertainty: f64,
) -> DumcalStatus {
    guard(|| {
        let h = unsafe { records.as_mut() }.ok_or_else(|| fail(DumcalStatus::NullPointer, "records handle is null"))?;
        if probs.is_null() {
            return Err(fail(DumcalStatus::NullPointer, "probs is null"));
        }
        let p = unsafe { std::slice::from_raw_parts(probs, n_classes) }.to_vec();
        if let Some(first) = h.log.records.first() {
            if first.classes() != n_classes {
                return Err(fail(
                    DumcalStatus::InvalidArgument,
                    format!("expected {} classes, got {n_classes}", first.classes()),
                ));
            }
        }
        let rec =
            PredictionRecord::from_probs(p, label, uncertainty).map_err(|e| fail(DumcalStatus::InvalidArgument, e))?;
        h.log.ids.push(h.log.records.len());
        h.log.records.push(rec);
        Ok(())
    })
}

/// Number of records held.
///
/// # Safety
/// `records` must come from this library; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dumcal_records_len(records: *const DumcalRecords, out_len: *mut usize) -> DumcalStatus {
    guard(|| {
        let h = unsafe { records_ref(records) }?;
        let out = unsafe { out_len.as_mut() }.ok_or_else(|| fail(DumcalStatus::NullPointer, "out_len is null"))?;
        *out = h.log.len();
        Ok(())
    })
}

/// Computes every metric with `n_bins` bins.
///
/// # Safety
/// `records` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dumcal_records_metrics(
    records: *const DumcalRecords,
    n_bins: usize,
    out: *mut DumcalMetrics,
) -> DumcalStatus {
    guard(|| {
        let h = unsafe { records_ref(records) }?;
        let out = unsafe { out.as_mut() }.ok_or_else(|| fail(DumcalStatus::NullPointer, "out is null"))?;
        *out = metrics_of(&h.log, n_bins)?;
        Ok(())
    })
}

/// Reads a prediction-log CSV into a new record set.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dumcal_records_load(path: *const c_char, out: *mut *mut DumcalRecords) -> DumcalStatus {
    guard(|| {
        let path = unsafe { path_arg(path, "path") }?;
        let log = read_log(&path).map_err(|e| fail(DumcalStatus::Io, e))?;
        out_handle(out, log)
    })
}

/// Writes a record set as a prediction-log CSV.
///
/// # Safety
/// `records` must come from this library; `path` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn dumcal_records_save(records: *const DumcalRecords, path: *const c_char) -> DumcalStatus {
    guard(|| {
        let h = unsafe { records_ref(records) }?;
        let path = unsafe { path_arg(path, "path") }?;
        if h.log.is_empty() {
            return Err(fail(DumcalStatus::InvalidArgument, "record set is empty"));
        }
        write_atomic(&[(path, log_to_csv(&h.log).into_bytes())]).map_err(|e| fail(DumcalStatus::Io, e))
    })
}

/// Averages the probabilities of `count` aligned record sets.
///
/// # Safety
/// `members` must point to `count` handles from this library; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn dumcal_records_ensemble(
    members: *const *const DumcalRecords,
    count: usize,
    out: *mut *mut DumcalRecords,
) -> DumcalStatus {
    guard(|| {
        if members.is_null() {
            return Err(fail(DumcalStatus::NullPointer, "members is null"));
        }
        let handles = unsafe { std::slice::from_raw_parts(members, count) };
        let logs = handles
            .iter()
            .map(|&h| unsafe { records_ref(h) }.map(|r| &r.log))
            .collect::<Result<Vec<_>, _>>()?;
        let merged = ensemble(&logs).map_err(|e| fail(DumcalStatus::InvalidArgument, e))?;
        out_handle(out, merged)
    })
}

/// Releases a record set. Null is ignored.
///
/// # Safety
/// `records` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dumcal_records_free(records: *mut DumcalRecords) {
    if !records.is_null() {
        drop(unsafe { Box::from_raw(records) });
    }
}

/// Trains the model described by a configuration file and returns its
/// test-split predictions.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dumcal_train(config_path: *const c_char, out: *mut *mut DumcalRecords) -> DumcalStatus {
    guard(|| {
        let path = unsafe { path_arg(config_path, "config_path") }?;
        let cfg = load_config(&path).map_err(|e| fail(DumcalStatus::Config, e))?;
        let data = make_dataset(&cfg.data).map_err(|e| fail(DumcalStatus::Config, e))?;
        let run = train(&cfg.training, &data).map_err(|e| fail(DumcalStatus::Train, e))?;
        out_handle(out, run.log)
    })
}
