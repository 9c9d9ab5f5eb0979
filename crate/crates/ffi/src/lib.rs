//! C ABI for the archpred toolkit: load a trained predictor model and
//! score architecture descriptions from any language that can call C.
//!
//! Conventions:
//! * A model is an opaque handle created by [`archpred_model_load`] and
//!   released with [`archpred_model_free`].
//! * Every fallible call returns an [`ArchPredStatus`]; on failure,
//!   [`archpred_last_error`] returns a thread-local message describing it.
//! * Strings are NUL-terminated UTF-8. Returned string pointers stay valid
//!   until the next failing call on the same thread (for the error
//!   message) or for the process lifetime (for the version).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use archpred::archspace::ArchitectureSpec;
use archpred::predictor::{predict, PredictorModel};

/// Opaque handle around a loaded predictor model.
pub struct ArchPredModel {
    inner: PredictorModel,
}

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchPredStatus {
    Ok = 0,
    /// A pointer was null or a scalar argument was out of range.
    InvalidArgument = 1,
    /// The file could not be read.
    Io = 2,
    /// The document is not valid JSON for the expected schema.
    Parse = 3,
    /// The model file violates a dimension invariant.
    InvalidModel = 4,
    /// The architecture fails validation.
    InvalidArchitecture = 5,
    /// Unexpected internal failure.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<Vec<u8>>) {
    let text = CString::new(message).unwrap_or_else(|_| {
        CString::new("error message contained an interior NUL byte").unwrap()
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn fail(status: ArchPredStatus, message: impl Into<Vec<u8>>) -> ArchPredStatus {
    set_error(message);
    status
}

fn guarded(body: impl FnOnce() -> ArchPredStatus) -> ArchPredStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(ArchPredStatus::Internal, "internal panic"),
    }
}

/// Message describing the most recent failure on this thread, or null if
/// none occurred yet. Valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn archpred_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn archpred_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(env!("CARGO_PKG_VERSION")).unwrap())
        .as_ptr()
}

/// Loads a predictor model file (JSON). On success stores a handle in
/// `out_model`; release it with [`archpred_model_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out_model` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn archpred_model_load(
    path: *const c_char,
    out_model: *mut *mut ArchPredModel,
) -> ArchPredStatus {
    guarded(|| {
        if path.is_null() || out_model.is_null() {
            return fail(ArchPredStatus::InvalidArgument, "null argument");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(p) => p,
            Err(_) => return fail(ArchPredStatus::InvalidArgument, "path is not UTF-8"),
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return fail(ArchPredStatus::Io, format!("{path}: {e}")),
        };
        match PredictorModel::from_json(&text) {
            Ok(model) => {
                let handle = Box::new(ArchPredModel { inner: model });
                unsafe { *out_model = Box::into_raw(handle) };
                ArchPredStatus::Ok
            }
            Err(e) => {
                use archpred::predictor::ModelFileError;
                let status = match e {
                    ModelFileError::Io(_) => ArchPredStatus::Io,
                    ModelFileError::Parse(_) => ArchPredStatus::Parse,
                    ModelFileError::UnsupportedVersion(_) | ModelFileError::Invalid(_) => {
                        ArchPredStatus::InvalidModel
                    }
                };
                fail(status, e.to_string())
            }
        }
    })
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must be a handle returned by [`archpred_model_load`] that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn archpred_model_free(model: *mut ArchPredModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Predicts the peak accuracy of the architecture given as a JSON document
/// (`{"v":1,"layers":[...]}`), for a dataset with difficulty `dcn` in
/// [0, 1] and `num_classes` classes. Writes the prediction to
/// `out_accuracy`.
///
/// # Safety
/// `model` must be a live handle from [`archpred_model_load`];
/// `architecture_json` must be a valid NUL-terminated string;
/// `out_accuracy` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn archpred_predict_json(
    model: *const ArchPredModel,
    architecture_json: *const c_char,
    dcn: f64,
    num_classes: u32,
    out_accuracy: *mut f64,
) -> ArchPredStatus {
    guarded(|| {
        if model.is_null() || architecture_json.is_null() || out_accuracy.is_null() {
            return fail(ArchPredStatus::InvalidArgument, "null argument");
        }
        if !(0.0..=1.0).contains(&dcn) {
            return fail(
                ArchPredStatus::InvalidArgument,
                format!("dcn {dcn} outside [0, 1]"),
            );
        }
        if num_classes < 2 {
            return fail(ArchPredStatus::InvalidArgument, "num_classes must be >= 2");
        }
        let json = match unsafe { CStr::from_ptr(architecture_json) }.to_str() {
            Ok(j) => j,
            Err(_) => {
                return fail(ArchPredStatus::InvalidArgument, "architecture is not UTF-8")
            }
        };
        let arch = match ArchitectureSpec::from_json(json) {
            Ok(a) => a,
            Err(e) => return fail(ArchPredStatus::Parse, e.to_string()),
        };
        let model = unsafe { &*model };
        match predict(&arch, dcn, num_classes, &model.inner) {
            Ok(accuracy) => {
                unsafe { *out_accuracy = accuracy };
                ArchPredStatus::Ok
            }
            Err(e) => {
                use archpred::predictor::PredictError;
                let status = match e {
                    PredictError::InvalidArchitecture(_) => ArchPredStatus::InvalidArchitecture,
                    PredictError::ModelDimensionMismatch(_) => ArchPredStatus::InvalidModel,
                };
                fail(status, e.to_string())
            }
        }
    })
}
