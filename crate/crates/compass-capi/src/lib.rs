//! C ABI for the compass toolkit.
//!
//! Conventions:
//! - Opaque handles (`CompassModel`, `CompassDataset`) created by `_load`
//!   functions and released by the matching `_free`.
//! - Every fallible call returns a `CompassStatus`; on failure the
//!   thread-local message from `compass_last_error_message` describes it.
//! - Out-parameters are written only on `CompassStatus::Ok`.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CStr, CString};
use std::path::Path;
use std::ptr;

use compass::attacks::{self, AttackConfig, AttackMethod};
use compass::data::LabeledDataset;
use compass::metrics;
use compass::model::Model;

/// Opaque model handle.
pub struct CompassModel(Model);

/// Opaque dataset handle.
pub struct CompassDataset(LabeledDataset);

/// Status code of every fallible API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompassStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidString = 2,
    LoadFailed = 3,
    InvalidArgument = 4,
    RuntimeError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl ToString) {
    let message = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).expect("NUL stripped");
    });
}

fn fail(status: CompassStatus, message: impl ToString) -> CompassStatus {
    set_error(message);
    status
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn compass_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, CompassStatus> {
    if ptr.is_null() {
        set_error("null path");
        return Err(CompassStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(CompassStatus::InvalidString)
        }
    }
}

/// Load a model directory. Returns null on failure (see
/// `compass_last_error_message`).
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn compass_model_load(path: *const c_char) -> *mut CompassModel {
    let Ok(path) = path_arg(path) else {
        return ptr::null_mut();
    };
    match Model::load(path) {
        Ok(model) => Box::into_raw(Box::new(CompassModel(model))),
        Err(e) => {
            set_error(e);
            ptr::null_mut()
        }
    }
}

/// Release a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have come from `compass_model_load` and not been freed.
#[no_mangle]
pub unsafe extern "C" fn compass_model_free(model: *mut CompassModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Load a dataset directory. Returns null on failure.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn compass_dataset_load(path: *const c_char) -> *mut CompassDataset {
    let Ok(path) = path_arg(path) else {
        return ptr::null_mut();
    };
    match LabeledDataset::load(path) {
        Ok(ds) => Box::into_raw(Box::new(CompassDataset(ds))),
        Err(e) => {
            set_error(e);
            ptr::null_mut()
        }
    }
}

/// Release a dataset handle. Null is a no-op.
///
/// # Safety
/// `dataset` must have come from `compass_dataset_load` and not been freed.
#[no_mangle]
pub unsafe extern "C" fn compass_dataset_free(dataset: *mut CompassDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of samples in a dataset.
///
/// # Safety
/// Both pointers must be valid (handle live, out non-null).
#[no_mangle]
pub unsafe extern "C" fn compass_dataset_len(
    dataset: *const CompassDataset,
    out_len: *mut usize,
) -> CompassStatus {
    if dataset.is_null() || out_len.is_null() {
        return fail(CompassStatus::NullArgument, "null argument");
    }
    *out_len = (*dataset).0.len();
    CompassStatus::Ok
}

/// Predicted class for one flattened input of `len` f64 pixels in [0, 1].
///
/// # Safety
/// `input` must point to `len` readable doubles; handles/outs valid.
#[no_mangle]
pub unsafe extern "C" fn compass_model_predict(
    model: *const CompassModel,
    input: *const c_double,
    len: usize,
    out_class: *mut c_int,
) -> CompassStatus {
    if model.is_null() || input.is_null() || out_class.is_null() {
        return fail(CompassStatus::NullArgument, "null argument");
    }
    let model = &(*model).0;
    let expected: usize = model.input_shape().iter().product();
    if len != expected {
        return fail(
            CompassStatus::InvalidArgument,
            format!("expected {expected} input values, got {len}"),
        );
    }
    let data = std::slice::from_raw_parts(input, len).to_vec();
    let tensor = match compass::Tensor::new(model.input_shape().to_vec(), data) {
        Ok(t) => t,
        Err(e) => return fail(CompassStatus::InvalidArgument, e),
    };
    match model.predict_class(&tensor) {
        Ok(class) => {
            *out_class = class as c_int;
            CompassStatus::Ok
        }
        Err(e) => fail(CompassStatus::RuntimeError, e),
    }
}

/// Accuracy of the model over the dataset.
///
/// # Safety
/// Handles must be live; `out_accuracy` non-null.
#[no_mangle]
pub unsafe extern "C" fn compass_accuracy(
    model: *const CompassModel,
    dataset: *const CompassDataset,
    out_accuracy: *mut c_double,
) -> CompassStatus {
    if model.is_null() || dataset.is_null() || out_accuracy.is_null() {
        return fail(CompassStatus::NullArgument, "null argument");
    }
    match metrics::classification_report(&(*model).0, &(*dataset).0) {
        Ok(report) => {
            *out_accuracy = report.accuracy;
            CompassStatus::Ok
        }
        Err(e) => fail(CompassStatus::RuntimeError, e),
    }
}

/// White-box attack success rate for `method` (kebab-case, e.g. "fgsm",
/// "pgd") at the given L-infinity budget with default hyperparameters.
///
/// # Safety
/// Handles must be live; `method` NUL-terminated; `out_asr` non-null.
#[no_mangle]
pub unsafe extern "C" fn compass_attack_success_rate(
    model: *const CompassModel,
    dataset: *const CompassDataset,
    method: *const c_char,
    epsilon: c_double,
    seed: u64,
    out_asr: *mut c_double,
) -> CompassStatus {
    if model.is_null() || dataset.is_null() || method.is_null() || out_asr.is_null() {
        return fail(CompassStatus::NullArgument, "null argument");
    }
    let method = match CStr::from_ptr(method).to_str() {
        Ok(s) => s,
        Err(_) => return fail(CompassStatus::InvalidString, "method is not valid UTF-8"),
    };
    let method: AttackMethod =
        match serde_json::from_value(serde_json::Value::String(method.to_string())) {
            Ok(m) => m,
            Err(_) => {
                return fail(
                    CompassStatus::InvalidArgument,
                    format!("unknown attack method: {method}"),
                )
            }
        };
    let mut config = AttackConfig::new(method).with_seed(seed);
    config.epsilon = epsilon;
    if let Err(e) = config.validate() {
        return fail(CompassStatus::InvalidArgument, e);
    }
    let model = &(*model).0;
    let batch = match attacks::run_attack(model, &(*dataset).0, &config) {
        Ok(b) => b,
        Err(e) => return fail(CompassStatus::RuntimeError, e),
    };
    match metrics::attack_success_rate(&batch, model) {
        Ok(asr) => {
            *out_asr = asr;
            CompassStatus::Ok
        }
        Err(e) => fail(CompassStatus::RuntimeError, e),
    }
}
